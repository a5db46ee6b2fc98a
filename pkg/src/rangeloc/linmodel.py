"""Lifted linear range model and the centralized closed-form estimators.

Squaring ``r_i = ||s_i - p|| + w_i`` gives the linear relation

    y_i = r_i**2 - ||s_i||**2 = a_i @ x + 2 ||s_i - p|| w_i + w_i**2,

with ``x = (||p||**2, p)`` and ``a_i = (1, -2 s_i)``. Dropping ``w_i**2`` gives
the unbiased model (``UNBIASED``); keeping it in the noise variance gives the
quadratic-noise model (``QUADRATIC``), whose estimate is biased by the mean of
``w_i**2``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

COND_WARN = 1e12
_SINGULAR_RTOL = 1e-12


class SingularInformationError(ValueError):
    """The information matrix cannot be inverted (too few or collinear agents)."""


class DegenerateWeightError(ValueError):
    """A zero noise level was given outside noiseless mode."""


class WeightMode(str, enum.Enum):
    UNBIASED = "unbiased"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class LinRow:
    y: float
    a: np.ndarray
    w_inv: float


@dataclass
class LinSystem:
    rows: list[LinRow]
    d: int
    weight_mode: WeightMode = WeightMode.UNBIASED

    @property
    def A(self) -> np.ndarray:
        return np.stack([r.a for r in self.rows]) if self.rows else np.zeros((0, self.d + 1))

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.rows])

    @property
    def w_inv(self) -> np.ndarray:
        return np.array([r.w_inv for r in self.rows])

    def information(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A^T C^-1 A, A^T C^-1 y)``."""
        A, w = self.A, self.w_inv
        return A.T @ (w[:, None] * A), A.T @ (w * self.y)


@dataclass(frozen=True)
class Estimate:
    x_hat: np.ndarray
    cov: np.ndarray

    @property
    def p_hat(self) -> np.ndarray:
        return self.x_hat[1:]


@dataclass(frozen=True)
class BiasVector:
    bias: np.ndarray
    psi: np.ndarray = field(repr=False)


def lifted_design(positions: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    return np.concatenate([np.ones(positions.shape[:-1] + (1,)), -2.0 * positions], axis=-1)


def lifted_response(positions: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    return np.asarray(ranges, dtype=float) ** 2 - np.sum(positions**2, axis=-1)


def lift(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.concatenate([[p @ p], p])


def row_weights(dist_plugin, sigma, mode: WeightMode | str = WeightMode.UNBIASED,
                noiseless: bool = False) -> np.ndarray:
    """Diagonal entries of ``C_y^-1`` for the chosen noise model.

    ``UNBIASED``: ``1 / (4 d^2 sigma^2)``; ``QUADRATIC``: ``1 / (4 d^2 sigma^2 + 2 sigma^4)``.
    In noiseless mode every weight is 1 (ordinary least squares).
    """
    mode = WeightMode(mode)
    dist_plugin = np.asarray(dist_plugin, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if noiseless:
        return np.ones(np.broadcast(dist_plugin, sigma).shape)
    if np.any(sigma <= 0):
        raise DegenerateWeightError("zero noise level in noisy mode")
    if np.any(dist_plugin <= 0):
        raise ValueError("plug-in distance must be positive")
    var = 4.0 * dist_plugin**2 * sigma**2
    if mode is WeightMode.QUADRATIC:
        var = var + 2.0 * sigma**4
    return 1.0 / var


def build_row(s_i, r_i: float, sigma_i: float, dist_plugin: float,
              mode: WeightMode | str = WeightMode.UNBIASED, noiseless: bool = False) -> LinRow:
    s_i = np.asarray(s_i, dtype=float)
    w = float(row_weights(dist_plugin, sigma_i, mode, noiseless))
    return LinRow(y=float(r_i**2 - s_i @ s_i), a=lifted_design(s_i), w_inv=w)


def build_system(positions, ranges, sigmas, dist_plugins=None,
                 mode: WeightMode | str = WeightMode.UNBIASED, noiseless: bool = False) -> LinSystem:
    """Stack one row per agent. ``dist_plugins`` defaults to the measured ranges."""
    positions = np.asarray(positions, dtype=float)
    ranges = np.asarray(ranges, dtype=float)
    if dist_plugins is None:
        dist_plugins = ranges
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), ranges.shape)
    dist_plugins = np.broadcast_to(np.asarray(dist_plugins, dtype=float), ranges.shape)
    rows = [build_row(s, r, sg, dp, mode, noiseless)
            for s, r, sg, dp in zip(positions, ranges, sigmas, dist_plugins)]
    return LinSystem(rows, positions.shape[1], WeightMode(mode))


def _equilibrate(P: np.ndarray):
    diag = np.diagonal(P, axis1=-2, axis2=-1)
    ok = np.all(diag > 0, axis=-1) & np.all(np.isfinite(P), axis=(-2, -1))
    scale = np.where(diag > 0, diag, 1.0) ** -0.5
    Pe = P * scale[..., :, None] * scale[..., None, :]
    Pe = np.where(ok[..., None, None], Pe, np.eye(P.shape[-1]))
    return Pe, scale, ok


def solve_information(P: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P^-1 z, P^-1)`` via an equilibrated Cholesky factorization.

    Raises :class:`SingularInformationError` when ``P`` is not positive definite
    to working precision.
    """
    P = 0.5 * (P + P.T)
    Pe, scale, ok = _equilibrate(P)
    if not ok:
        raise SingularInformationError("information matrix has a non-positive diagonal")
    eig = np.linalg.eigvalsh(Pe)
    if eig[0] <= _SINGULAR_RTOL * eig[-1]:
        raise SingularInformationError(f"information matrix is rank deficient (min eig {eig[0]:.3g})")
    if eig[-1] / eig[0] > COND_WARN:
        warnings.warn(f"ill-conditioned information matrix (cond {eig[-1] / eig[0]:.3g})", RuntimeWarning)
    factor = la.cho_factor(Pe, lower=True)
    x = scale * la.cho_solve(factor, scale * z)
    cov_e = la.cho_solve(factor, np.eye(len(z)))
    cov = scale[:, None] * cov_e * scale[None, :]
    return x, 0.5 * (cov + cov.T)


def solve_information_batch(P: np.ndarray, z: np.ndarray):
    """Batched :func:`solve_information` over leading axes.

    Returns ``(x, cov, ok)``; entries where ``ok`` is False are NaN.
    """
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    Pe, scale, ok = _equilibrate(P)
    eig = np.linalg.eigvalsh(Pe)
    ok = ok & (eig[..., 0] > _SINGULAR_RTOL * eig[..., -1])
    Pe = np.where(ok[..., None, None], Pe, np.eye(P.shape[-1]))
    m = P.shape[-1]
    ze = np.broadcast_to(scale * z, np.broadcast_shapes(Pe.shape[:-1], z.shape))
    Pe_b = np.broadcast_to(Pe, ze.shape + (m,))
    x = scale * np.linalg.solve(Pe_b, ze[..., None])[..., 0]
    cov = np.linalg.inv(Pe) * scale[..., :, None] * scale[..., None, :]
    x = np.where(ok[..., None], x, np.nan)
    cov = np.where(ok[..., None, None], cov, np.nan)
    return x, cov, np.broadcast_to(ok, x.shape[:-1])


def solve_centralized(sys: LinSystem) -> Estimate:
    if len(sys.rows) < sys.d + 1:
        raise SingularInformationError(f"{len(sys.rows)} rows cannot determine {sys.d + 1} unknowns")
    F, b = sys.information()
    x, cov = solve_information(F, b)
    return Estimate(x, cov)


def analytic_bias(sys: LinSystem, sigmas: Sequence[float]) -> BiasVector:
    """Expected error of the linear estimate caused by ``E[w_i^2] = sigma_i^2``."""
    psi = np.asarray(sigmas, dtype=float) ** 2
    if len(psi) != len(sys.rows):
        raise ValueError("one sigma per row required")
    F, _ = sys.information()
    bias, _ = solve_information(F, sys.A.T @ (sys.w_inv * psi))
    return BiasVector(bias, psi)


def srls_cost(p, positions, ranges) -> float:
    """Squared-range least-squares cost ``sum_i (||s_i - p||^2 - r_i^2)^2``."""
    positions = np.asarray(positions, dtype=float)
    sq = np.sum((positions - np.asarray(p, dtype=float)) ** 2, axis=1)
    return float(np.sum((sq - np.asarray(ranges, dtype=float) ** 2) ** 2))
