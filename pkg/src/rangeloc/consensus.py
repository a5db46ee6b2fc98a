"""Consensus + innovations fusion of per-agent information pairs.

Every agent ``i`` holds an information matrix ``P_i`` and vector ``z_i``; its
estimate is ``P_i^-1 z_i`` with covariance ``P_i^-1``. States are stored as
stacked arrays: ``P`` has shape ``(..., n, m, m)`` and ``z`` has shape
``(..., n, m)``, where leading axes index independent trials and
``m = d + 1``. Weights are an ``(n, n)`` row-stochastic matrix ``W`` and
neighbourhoods an ``(n, n)`` 0/1 indicator ``B`` (both including self).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from rangeloc.linmodel import Estimate, LinRow, SingularInformationError, solve_information, \
    solve_information_batch


class Scheme(str, enum.Enum):
    ISEEU = "iseeu"
    CONSENSUS = "c"
    CONS_INNOV = "ci"
    MOD_CONS_INNOV = "mci"


@dataclass(frozen=True)
class Contribution:
    M: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class InfoState:
    P: np.ndarray
    z: np.ndarray
    tau: int = 0


@dataclass(frozen=True)
class NetworkState:
    P: np.ndarray
    z: np.ndarray
    tau: int = 0

    @classmethod
    def zeros(cls, n: int, m: int, batch: tuple[int, ...] = ()) -> "NetworkState":
        return cls(np.zeros(batch + (n, m, m)), np.zeros(batch + (n, m)), 0)

    def agent(self, i: int) -> InfoState:
        return InfoState(self.P[..., i, :, :], self.z[..., i, :], self.tau)


def local_contribution(row: LinRow) -> Contribution:
    a = np.asarray(row.a, dtype=float)
    return Contribution(row.w_inv * np.outer(a, a), row.w_inv * row.y * a)


def contributions(A: np.ndarray, y: np.ndarray, w_inv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`local_contribution`; ``A`` is ``(..., n, m)``."""
    A = np.asarray(A, dtype=float)
    w_inv = np.asarray(w_inv, dtype=float)
    M = w_inv[..., None, None] * A[..., :, None] * A[..., None, :]
    v = (w_inv * np.asarray(y, dtype=float))[..., None] * A
    return M, v


def mix(W: np.ndarray, X: np.ndarray, agent_axis: int) -> np.ndarray:
    """``sum_j W_ij X_j`` along ``agent_axis`` as a single matrix product."""
    X = np.moveaxis(X, agent_axis, 0)
    shape = X.shape
    out = W @ X.reshape(shape[0], -1)
    return np.moveaxis(out.reshape((W.shape[0],) + shape[1:]), 0, agent_axis)


def _averaged(state: NetworkState, W: np.ndarray, innov_P: np.ndarray, innov_z: np.ndarray) -> NetworkState:
    tau = state.tau
    keep, fresh = tau / (tau + 1.0), 1.0 / (tau + 1.0)
    P = keep * mix(W, state.P, -3) + fresh * innov_P
    z = keep * mix(W, state.z, -2) + fresh * innov_z
    return NetworkState(P, z, tau + 1)


def step_iseeu(state: NetworkState, W: np.ndarray, B: np.ndarray, M: np.ndarray, v: np.ndarray) -> NetworkState:
    """One round with unweighted innovations summed over each closed neighbourhood."""
    return _averaged(state, W, mix(B, M, -3), mix(B, v, -2))


def step_baseline(kind: Scheme | str, state: NetworkState, W: np.ndarray,
                  M: np.ndarray, v: np.ndarray) -> NetworkState:
    """Reference fusion schemes sharing the ISEE.U state layout.

    ``CONSENSUS`` seeds each agent with its own first contribution and then
    only averages; ``CONS_INNOV`` injects the agent's own fresh contribution;
    ``MOD_CONS_INNOV`` injects the neighbourhood contributions weighted by ``W``.
    """
    kind = Scheme(kind)
    if kind is Scheme.CONSENSUS:
        if state.tau == 0:
            P = np.broadcast_to(M, np.broadcast_shapes(M.shape, state.P.shape)).copy()
            z = np.broadcast_to(v, np.broadcast_shapes(v.shape, state.z.shape)).copy()
            return NetworkState(P, z, 1)
        return NetworkState(mix(W, state.P, -3), mix(W, state.z, -2), state.tau + 1)
    if kind is Scheme.CONS_INNOV:
        return _averaged(state, W, M, v)
    if kind is Scheme.MOD_CONS_INNOV:
        return _averaged(state, W, mix(W, M, -3), mix(W, v, -2))
    raise ValueError(f"{kind} is not a baseline scheme")


def step(kind: Scheme | str, state: NetworkState, W: np.ndarray, B: np.ndarray,
         M: np.ndarray, v: np.ndarray) -> NetworkState:
    kind = Scheme(kind)
    if kind is Scheme.ISEEU:
        return step_iseeu(state, W, B, M, v)
    return step_baseline(kind, state, W, M, v)


def extract_estimate(st: InfoState) -> Estimate:
    """``x = P^-1 z`` and ``cov = P^-1``; raises if ``P`` is singular."""
    if st.tau == 0:
        raise SingularInformationError("no information accumulated yet")
    x, cov = solve_information(np.asarray(st.P, float), np.asarray(st.z, float))
    return Estimate(x, cov)


def extract_estimates(state: NetworkState):
    """Batched extraction over all agents (and trials): ``(x, cov, ok)``."""
    return solve_information_batch(state.P, state.z)


def normalized_info_error(value: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """``||value - reference|| / ||reference||`` (Frobenius for matrices, 2-norm for vectors).

    Works on the trailing one (vector) or two (matrix) axes depending on the
    reference's rank; leading axes of ``value`` broadcast.
    """
    reference = np.asarray(reference, dtype=float)
    axes = tuple(range(-reference.ndim, 0)) if reference.ndim <= 2 else (-2, -1)
    ref_norm = np.sqrt(np.sum(reference**2, axis=axes))
    if np.any(ref_norm == 0):
        raise ValueError("reference has zero norm")
    err = np.sqrt(np.sum((np.asarray(value, float) - reference) ** 2, axis=axes))
    return err / ref_norm


def messages(state: NetworkState, M: np.ndarray, v: np.ndarray, neighbors: dict[int, frozenset[int]],
             ids: tuple[int, ...], round_: int) -> Iterator[dict]:
    """One-hop messages exchanged in a round, for logging or replay.

    Each record is ``{round, from, to, P, z, M, v}`` with ``P``/``M`` flattened
    row-major. ``state`` must be unbatched.
    """
    index = {a: k for k, a in enumerate(ids)}
    for i in ids:
        for j in sorted(neighbors[i]):
            if j == i:
                continue
            k = index[j]
            yield {
                "round": int(round_),
                "from": int(j),
                "to": int(i),
                "P": state.P[k].ravel().tolist(),
                "z": state.z[k].tolist(),
                "M": M[k].ravel().tolist(),
                "v": v[k].tolist(),
            }
