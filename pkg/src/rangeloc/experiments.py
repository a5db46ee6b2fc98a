"""Monte Carlo studies on a fixed network geometry.

The ensemble runner vectorizes over trials: every (trial, agent) pair keeps its
own measurement stream, drawn in blocks, so results match the per-trial
simulator draw for draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import consensus as cons
from .linmodel import lift, lifted_design, lifted_response, row_weights, solve_information_batch
from .metrics import EmpiricalCdf, MaeSeries, VarianceTrace, empirical_cdf, first_within, mae_from_errors
from .refine import RefineConfig, refine_bb
from .sensing import STREAM_MEASURE, draw_ranges, make_rng
from .sim import ScenarioConfig, comm_range_for, initial_agent_positions, make_world, run_monte_carlo


@dataclass(frozen=True)
class StaticNetwork:
    positions: np.ndarray  # (n, d)
    target: np.ndarray     # (d,)
    W: np.ndarray
    B: np.ndarray
    comm_range: float

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def dist(self) -> np.ndarray:
        return np.linalg.norm(self.positions - self.target, axis=1)


def static_network(cfg: ScenarioConfig, trial: int = 0) -> StaticNetwork:
    positions = initial_agent_positions(cfg, trial)
    target = np.asarray(cfg.targets[0].position, dtype=float)
    comm_range = comm_range_for(cfg, positions)
    world = make_world(cfg, 0, positions, target[None], comm_range)
    return StaticNetwork(positions, target, world.comm.uniform_weights(), world.comm.indicator(), comm_range)


def _noise_rounds(seed: int, trials: Sequence[int], n: int, total: int, block: int = 100) -> Iterator[np.ndarray]:
    gens = [[make_rng(seed, STREAM_MEASURE, t, i) for i in range(n)] for t in trials]
    for start in range(0, total, block):
        size = min(block, total - start)
        chunk = np.array([[g.standard_normal(size) for g in row] for row in gens])
        for k in range(size):
            yield chunk[:, :, k]


@dataclass(frozen=True)
class RoundData:
    tau: int
    state: cons.NetworkState
    M: np.ndarray  # (n, m, m) with oracle weights, else (trials, n, m, m)
    v: np.ndarray  # (trials, n, m)


def run_ensemble(cfg: ScenarioConfig, net: StaticNetwork, scheme, trials: Sequence[int],
                 rounds: int | None = None) -> Iterator[RoundData]:
    """Yield the network state after every round, batched over ``trials``."""
    rounds = cfg.consensus_rounds if rounds is None else rounds
    nm = cfg.noise
    A = lifted_design(net.positions)
    dist = net.dist
    sigma = nm.scale * dist
    state = cons.NetworkState(np.zeros((net.n,) + A.shape[1:] * 2), np.zeros((len(trials),) + A.shape), 0)
    oracle_w = None
    if cfg.oracle_dist:
        oracle_w = row_weights(np.maximum(dist, cfg.plugin_floor), nm.scale * np.maximum(dist, cfg.plugin_floor),
                               cfg.weight_mode, noiseless=nm.noiseless)
    for tau, noise in enumerate(_noise_rounds(cfg.seed, trials, net.n, rounds), start=1):
        r = draw_ranges(dist, sigma, noise)
        if oracle_w is None:
            plug = np.maximum(r, cfg.plugin_floor)
            w = row_weights(plug, nm.scale * plug, cfg.weight_mode, noiseless=nm.noiseless)
        else:
            w = oracle_w
        M, v = cons.contributions(A, lifted_response(net.positions, r), w)
        state = cons.step(scheme, state, net.W, net.B, M, v)
        yield RoundData(tau, state, M, v)


def _trials(cfg: ScenarioConfig, trials: int | None) -> list[int]:
    if cfg.placement_per_trial:
        raise ValueError("ensemble studies need a fixed agent placement")
    return list(range(cfg.trials if trials is None else trials))


@dataclass(frozen=True)
class ConsensusComparison:
    P_errors: dict[cons.Scheme, np.ndarray]  # pooled over trials and agents
    z_errors: dict[cons.Scheme, np.ndarray]

    def cdfs(self) -> dict[tuple[str, cons.Scheme], EmpiricalCdf]:
        out = {}
        for s in self.P_errors:
            out["P", s] = empirical_cdf(self.P_errors[s])
            out["z", s] = empirical_cdf(self.z_errors[s])
        return out

    def medians(self) -> dict[tuple[str, cons.Scheme], float]:
        return {key: cdf.median() for key, cdf in self.cdfs().items()}


def compare_consensus(cfg: ScenarioConfig, schemes: Sequence = tuple(cons.Scheme),
                      trials: int | None = None) -> ConsensusComparison:
    """Normalized errors of each agent's ``(P, z)`` after the last round.

    The reference is the centralized pair: the sum of all agents'
    contributions, averaged over the rounds.
    """
    idx = _trials(cfg, trials)
    net = static_network(cfg)
    P_err, z_err = {}, {}
    for scheme in map(cons.Scheme, schemes):
        P_ref = z_ref = 0.0
        for rd in run_ensemble(cfg, net, scheme, idx):
            P_ref = P_ref + rd.M.sum(axis=-3)
            z_ref = z_ref + rd.v.sum(axis=-2)
        P_ref = P_ref / rd.tau
        z_ref = z_ref / rd.tau
        P_ref = np.broadcast_to(P_ref, (len(idx),) + P_ref.shape[-2:])
        P_err[scheme] = cons.normalized_info_error(
            np.broadcast_to(rd.state.P, (len(idx),) + rd.state.P.shape[-3:]), P_ref[:, None]).ravel()
        z_err[scheme] = np.stack([cons.normalized_info_error(rd.state.z[t], z_ref[t]) for t in range(len(idx))]).ravel()
    return ConsensusComparison(P_err, z_err)


@dataclass(frozen=True)
class VarianceStudy:
    per_agent: np.ndarray  # (rounds, n)
    trace: VarianceTrace   # network mean

    def plateau_entry(self, rel_tol: float = 0.1) -> int | None:
        """First round at which ``tau * var`` is within ``rel_tol`` of its final value."""
        tv = self.trace.tau_var
        hit = first_within(tv, tv[-1], rel_tol)
        return None if hit is None else int(self.trace.tau[hit])


def variance_study(cfg: ScenarioConfig, schemes: Sequence = (cons.Scheme.ISEEU, cons.Scheme.CONS_INNOV),
                   trials: int | None = None, rounds: int | None = None) -> dict[cons.Scheme, VarianceStudy]:
    idx = _trials(cfg, trials)
    if len(idx) < 2:
        raise ValueError("need at least two trials")
    net = static_network(cfg)
    out = {}
    for scheme in map(cons.Scheme, schemes):
        rows = []
        for rd in run_ensemble(cfg, net, scheme, idx, rounds):
            x, _, _ = solve_information_batch(rd.state.P, rd.state.z)
            rows.append(np.var(x, axis=0, ddof=1).sum(axis=-1))
        per_agent = np.array(rows)
        out[scheme] = VarianceStudy(per_agent, VarianceTrace(np.arange(1, len(rows) + 1), per_agent.mean(axis=1)))
    return out


@dataclass(frozen=True)
class Centeredness:
    taus: tuple[int, ...]
    truth: np.ndarray  # lifted (m,)
    mean: np.ndarray   # (len(taus), n, m)
    se: np.ndarray     # (len(taus), n, m)
    n_valid: np.ndarray  # (len(taus), n)

    @property
    def z_scores(self) -> np.ndarray:
        return np.abs(self.mean - self.truth) / self.se


def centeredness(cfg: ScenarioConfig, taus: Sequence[int] = (1, 5, 20), trials: int | None = None,
                 scheme=cons.Scheme.ISEEU) -> Centeredness:
    """Ensemble mean and standard error of every agent's estimate at the given rounds."""
    idx = _trials(cfg, trials)
    net = static_network(cfg)
    taus = tuple(sorted(taus))
    means, ses, counts = [], [], []
    for rd in run_ensemble(cfg, net, scheme, idx, max(taus)):
        if rd.tau not in taus:
            continue
        x, _, ok = solve_information_batch(rd.state.P, rd.state.z)
        x = np.where(ok[..., None], x, np.nan)
        count = ok.sum(axis=0)
        means.append(np.nanmean(x, axis=0))
        ses.append(np.nanstd(x, axis=0, ddof=1) / np.sqrt(count)[:, None])
        counts.append(count)
    return Centeredness(taus, lift(net.target), np.array(means), np.array(ses), np.array(counts))


@dataclass(frozen=True)
class RefineStudy:
    mae: dict[str, MaeSeries]  # keys: "iseeu", "bb", "projected"
    cost_increases: int
    refinements: int


def refine_study(cfg: ScenarioConfig, threads: int = 1, trials: int | None = None) -> RefineStudy:
    """Polish the reporting agent's estimate by direct range-likelihood descent.

    Both an unconstrained and a box-projected refinement start from the
    estimate and use the ranges of the agent network's last round.
    """
    idx = list(range(cfg.trials if trials is None else trials))
    traces = run_monte_carlo(cfg, threads=threads, trials=idx)
    nm = cfg.noise
    box = (np.array(cfg.area_lower), np.array(cfg.area_upper))
    settings = {"bb": RefineConfig(cfg.refine_max_iters, cfg.refine_grad_tol),
                "projected": RefineConfig(cfg.refine_max_iters, cfg.refine_grad_tol, box=box)}
    errors = {key: np.full((len(traces), cfg.iterations), np.nan) for key in ("iseeu", *settings)}
    increases = done = 0
    for row, tr in enumerate(traces):
        est = tr.reported_estimates(0)
        truth = tr.target_positions[:, 0]
        errors["iseeu"][row] = np.linalg.norm(est - truth, axis=1)
        for t in range(len(tr)):
            ranges = tr.last_ranges[t, :, 0]
            seen = np.isfinite(ranges)
            if not np.all(np.isfinite(est[t])) or seen.sum() < cfg.dim + 1:
                continue
            positions, r = tr.meas_positions[t][seen], ranges[seen]
            sigmas = None if nm.noiseless else nm.scale * np.maximum(r, cfg.plugin_floor)
            for key, rc in settings.items():
                res = refine_bb(est[t], positions, r, sigmas, rc)
                done += 1
                increases += res.cost > res.initial_cost
                errors[key][row, t] = np.linalg.norm(res.position - truth[t])
    return RefineStudy({k: mae_from_errors(v) for k, v in errors.items()}, increases, done)
