"""Maximum-likelihood polishing of a position estimate.

Spectral (Barzilai-Borwein) gradient descent with a nonmonotone line search
and optional projection onto a box.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

SINGULAR_DIST = 1e-9


class CostKind(str, enum.Enum):
    ML_RANGE = "ml_range"
    SRLS = "srls"


class SingularGradientError(ValueError):
    pass


@dataclass(frozen=True)
class RefineConfig:
    max_iters: int = 200
    grad_tol: float = 1e-8
    step_init: float = 1.0
    step_bounds: tuple[float, float] = (1e-8, 1e8)
    cost_kind: CostKind = CostKind.ML_RANGE
    box: tuple[np.ndarray, np.ndarray] | None = None
    window: int = 10

    def __post_init__(self):
        lo, hi = self.step_bounds
        if not 0 < lo < hi < np.inf:
            raise ValueError("step bounds must satisfy 0 < min < max < inf")
        if self.max_iters < 0 or self.grad_tol <= 0 or self.step_init <= 0:
            raise ValueError("invalid refinement settings")
        object.__setattr__(self, "cost_kind", CostKind(self.cost_kind))


@dataclass
class RefineResult:
    position: np.ndarray
    cost: float
    initial_cost: float
    iterations: int
    flag: str = ""
    history: list[float] = field(default_factory=list, repr=False)


def ml_cost_and_grad(p, positions, ranges, sigmas) -> tuple[float, np.ndarray]:
    """``sum_i (||s_i - p|| - r_i)^2 / sigma_i^2`` and its gradient in ``p``."""
    p = np.asarray(p, dtype=float)
    diff = p - np.asarray(positions, dtype=float)
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist < SINGULAR_DIST):
        raise SingularGradientError("gradient undefined at an agent position")
    inv_var = 1.0 / np.asarray(sigmas, dtype=float) ** 2
    res = dist - np.asarray(ranges, dtype=float)
    cost = float(np.sum(inv_var * res**2))
    grad = np.sum((2.0 * inv_var * res / dist)[:, None] * diff, axis=0)
    return cost, grad


def ml_cost(p, positions, ranges, sigmas) -> float:
    dist = np.linalg.norm(np.asarray(p, float) - np.asarray(positions, float), axis=1)
    return float(np.sum((dist - np.asarray(ranges, float)) ** 2 / np.asarray(sigmas, float) ** 2))


def srls_cost_and_grad(p, positions, ranges) -> tuple[float, np.ndarray]:
    diff = np.asarray(p, dtype=float) - np.asarray(positions, dtype=float)
    res = np.sum(diff**2, axis=1) - np.asarray(ranges, dtype=float) ** 2
    return float(np.sum(res**2)), np.sum((4.0 * res)[:, None] * diff, axis=0)


def project(p, box) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if box is None:
        return p
    return np.clip(p, box[0], box[1])


def refine_bb(p0, positions, ranges, sigmas=None, cfg: RefineConfig = RefineConfig()) -> RefineResult:
    """Spectral projected gradient from ``p0``; returns the lowest-cost iterate seen."""
    positions = np.asarray(positions, dtype=float)
    ranges = np.asarray(ranges, dtype=float)
    if sigmas is None:
        sigmas = np.ones_like(ranges)
    sigmas = np.asarray(sigmas, dtype=float)

    if cfg.cost_kind is CostKind.ML_RANGE:
        def fg(p):
            return ml_cost_and_grad(p, positions, ranges, sigmas)
    else:
        def fg(p):
            return srls_cost_and_grad(p, positions, ranges)

    x = project(np.asarray(p0, dtype=float), cfg.box)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")
    f, g = fg(x)
    f_init = f
    best_x, best_f = x.copy(), f
    lo, hi = cfg.step_bounds
    alpha = float(np.clip(cfg.step_init, lo, hi))
    recent = deque([f], maxlen=cfg.window)
    history = [f]
    flag = ""
    k = 0
    for k in range(cfg.max_iters + 1):
        if np.linalg.norm(project(x - g, cfg.box) - x) <= cfg.grad_tol:
            flag = "converged"
            break
        if k == cfg.max_iters:
            flag = "max-iters"
            break
        d = project(x - alpha * g, cfg.box) - x
        slope = float(g @ d)
        f_ref = max(recent)
        lam = 1.0
        for _ in range(60):
            trial = x + lam * d
            try:
                f_new, g_new = fg(trial)
            except SingularGradientError:
                lam *= 0.5
                continue
            if f_new <= f_ref + 1e-4 * lam * slope:
                break
            lam *= 0.5
        else:
            flag = "line-search"
            break
        s, y = trial - x, g_new - g
        sy = float(s @ y)
        alpha = float(np.clip(s @ s / sy, lo, hi)) if sy > 0 else hi
        x, f, g = trial, f_new, g_new
        recent.append(f)
        history.append(f)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if f > 1e6 * max(f_init, 1e-300):
            flag = "diverged"
            break
    return RefineResult(best_x, best_f, f_init, k, flag, history)
