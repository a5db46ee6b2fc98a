"""Greedy D-optimal motion on a grid.

An agent removes its own contribution from its information matrix, re-adds
the contribution it would have at each reachable cell, and moves to the cell
whose error ellipsoid has the smallest volume.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from rangeloc.linmodel import WeightMode, lifted_design, row_weights

DEFAULT_THETA = 0.95


class SchedulerMode(str, enum.Enum):
    RANDOM_SINGLE = "random_single"
    SEQUENTIAL_ALL = "sequential_all"


def chi2_quantile(dof: int, theta: float) -> float:
    if not 0.0 < theta < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    return float(stats.chi2.ppf(theta, dof))


def unit_ball_factor(m: int) -> float:
    """Volume of the unit ball in ``m`` dimensions, split by parity of ``m``."""
    eps = m // 2
    if m % 2 == 0:
        return math.pi**eps / math.factorial(eps)
    return 2.0 * math.factorial(eps) * (4.0 * math.pi) ** eps / math.factorial(2 * eps + 1)


@dataclass(frozen=True)
class EllipsoidSpec:
    half_axes: np.ndarray
    lambdas: np.ndarray
    chi2: float
    theta: float

    @property
    def volume(self) -> float:
        return unit_ball_factor(len(self.half_axes)) * float(np.prod(self.half_axes))


def ellipsoid(cov: np.ndarray, theta: float = DEFAULT_THETA) -> EllipsoidSpec:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    scale = max(np.max(np.abs(cov)), 1e-300)
    if np.max(np.abs(cov - cov.T)) > 1e-9 * scale:
        raise ValueError("covariance must be symmetric")
    lam = np.clip(np.linalg.eigvalsh(0.5 * (cov + cov.T)), 0.0, None)
    c2 = chi2_quantile(len(lam), theta)
    return EllipsoidSpec(np.sqrt(c2 * lam), lam, c2, theta)


def ellipsoid_volume(cov: np.ndarray, theta: float = DEFAULT_THETA) -> float:
    return ellipsoid(cov, theta).volume


def log_volume_from_information(P: np.ndarray, theta: float = DEFAULT_THETA) -> float:
    """Log-volume of the ellipsoid of ``cov = P^-1`` without an eigendecomposition.

    Returns ``inf`` when ``P`` is not positive definite.
    """
    m = P.shape[-1]
    try:
        chol = np.linalg.cholesky(0.5 * (P + P.T))
    except np.linalg.LinAlgError:
        return math.inf
    log_det_P = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return math.log(unit_ball_factor(m)) + 0.5 * m * math.log(chi2_quantile(m, theta)) - 0.5 * log_det_P


@dataclass(frozen=True)
class MoveGrid:
    cell: float
    lower: np.ndarray
    upper: np.ndarray
    reach: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.cell <= 0:
            raise ValueError("grid cell must be positive")

    def contains(self, pos, tol: float = 1e-9) -> bool:
        pos = np.asarray(pos, dtype=float)
        return bool(np.all(pos >= self.lower - tol) and np.all(pos <= self.upper + tol))

    def snap(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        snapped = self.lower + np.round((pos - self.lower) / self.cell) * self.cell
        return np.clip(snapped, self.lower, self.upper)


def candidate_positions(pos, grid: MoveGrid) -> list[np.ndarray]:
    """Current cell and its in-bounds neighbours, in row-major offset order."""
    pos = np.asarray(pos, dtype=float)
    steps = range(-grid.reach, grid.reach + 1)
    out = []
    for offset in itertools.product(steps, repeat=len(pos)):
        cand = pos + grid.cell * np.asarray(offset, dtype=float)
        if grid.contains(cand):
            out.append(cand)
    return out


@dataclass
class ControlDecision:
    agent_id: int
    chosen_pos: np.ndarray
    old_volume: float
    new_volume: float
    evaluated: list[tuple[np.ndarray, float]] = field(default_factory=list, repr=False)
    flag: str = ""
    t: int = 0


def own_information(pos, p_hat, scale: float, mode: WeightMode | str = WeightMode.UNBIASED,
                    min_dist: float = 1e-6) -> np.ndarray:
    """Information ``w a a^T`` an agent at ``pos`` would contribute about ``p_hat``."""
    pos = np.asarray(pos, dtype=float)
    dist = max(float(np.linalg.norm(pos - np.asarray(p_hat, dtype=float))), min_dist)
    w = float(row_weights(dist, scale * dist, mode, noiseless=scale == 0.0))
    a = lifted_design(pos)
    return w * np.outer(a, a)


def greedy_move(agent_id: int, pos, P: Sequence[np.ndarray], p_hat: Sequence[np.ndarray],
                grid: MoveGrid, scale: float, mode: WeightMode | str = WeightMode.UNBIASED,
                theta: float = DEFAULT_THETA, min_dist: float = 1e-6, t: int = 0) -> ControlDecision:
    """Pick the reachable cell minimizing the joint ellipsoid volume over targets.

    ``P`` and ``p_hat`` hold the agent's information matrix and position
    estimate for each target it tracks. Staying put is evaluated on the
    unmodified matrices, so the chosen volume never exceeds the current one.
    """
    pos = np.asarray(pos, dtype=float)
    P = [np.asarray(x, dtype=float) for x in P]
    old_log = sum(log_volume_from_information(Pk, theta) for Pk in P)
    if not P or not math.isfinite(old_log):
        return ControlDecision(agent_id, pos, math.inf, math.inf, [], flag="singular-information", t=t)
    removed = [Pk - own_information(pos, pk, scale, mode, min_dist) for Pk, pk in zip(P, p_hat)]
    evaluated = []
    best_pos, best_log = pos, old_log
    for cand in candidate_positions(pos, grid):
        if np.array_equal(cand, pos):
            log_v = old_log
        else:
            log_v = sum(log_volume_from_information(Fk + own_information(cand, pk, scale, mode, min_dist), theta)
                        for Fk, pk in zip(removed, p_hat))
        evaluated.append((cand, math.exp(log_v)))
        if log_v < best_log:
            best_pos, best_log = cand, log_v
    return ControlDecision(agent_id, best_pos, math.exp(old_log), math.exp(best_log), evaluated, t=t)


def select_movers(mode: SchedulerMode | str, agent_ids: Sequence[int], rng: np.random.Generator) -> list[int]:
    mode = SchedulerMode(mode)
    ids = sorted(agent_ids)
    if mode is SchedulerMode.RANDOM_SINGLE:
        return [ids[int(rng.integers(len(ids)))]]
    return ids
