"""Scenario engine: target motion, the estimate-then-move loop and Monte Carlo runs."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rangeloc import consensus as cons
from rangeloc.control import DEFAULT_THETA, ControlDecision, MoveGrid, SchedulerMode, greedy_move, \
    log_volume_from_information, select_movers
from rangeloc.linmodel import WeightMode, lifted_design, lifted_response, row_weights
from rangeloc.sensing import STREAM_MEASURE, STREAM_PLACEMENT, STREAM_SCHEDULE, STREAM_TARGET, NoiseModel, \
    make_rng, measure_all
from rangeloc.world import Agent, Target, WorldState, radius_for_mean_degree


class MotionKind(str, enum.Enum):
    STATIC = "static"
    LINEAR = "linear"
    SPIRAL = "spiral"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class MotionModel:
    """Target motion.

    ``SPIRAL`` moves clockwise along a shrinking circle at ``speed`` per step,
    starting from the leftmost point; the radius is multiplied by ``decay``
    every ``decay_period`` steps. Each step adds the displacement between
    consecutive spiral waypoints plus ``noise_gain @ q`` with
    ``q ~ N(0, q_var I)``, so the spiral is traced from wherever the target
    starts.
    """

    kind: MotionKind = MotionKind.STATIC
    velocity: tuple[float, ...] = (0.0, 0.0)
    speed: float = 0.7
    radius0: float = 20.0
    decay: float = 0.97
    decay_period: int = 10
    center: tuple[float, float] = (20.0, 0.0)
    q_var: float = 1e-5
    noise_gain: tuple[tuple[float, float], ...] = ((1.0, 0.0), (0.0, 1.0), (0.0, 0.0), (0.0, 0.0))
    script: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", MotionKind(self.kind))
        if self.speed < 0 or not 0 < self.decay <= 1 or self.radius0 <= 0 or self.decay_period < 1:
            raise ValueError("invalid motion parameters")
        if self.q_var < 0:
            raise ValueError("q_var must be non-negative")
        if self.kind is MotionKind.SCRIPTED and not self.script:
            raise ValueError("scripted motion needs a non-empty script")


@dataclass(frozen=True)
class TargetState4:
    p: np.ndarray
    v: np.ndarray

    @classmethod
    def at(cls, p) -> "TargetState4":
        p = np.asarray(p, dtype=float)
        return cls(p, np.zeros_like(p))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


def spiral_radius(model: MotionModel, t: int) -> float:
    return model.radius0 * model.decay ** (t // model.decay_period)


def spiral_angle(model: MotionModel, t: int) -> float:
    """Angle after ``t`` steps, each advancing the arc by ``speed``."""
    if t <= 0:
        return math.pi
    radii = model.radius0 * model.decay ** (np.arange(1, t + 1) // model.decay_period)
    return math.pi - float(np.sum(model.speed / radii))


def spiral_waypoint(model: MotionModel, t: int) -> np.ndarray:
    r, ang = spiral_radius(model, t), spiral_angle(model, t)
    return np.array([r * math.cos(ang) + model.center[0], r * math.sin(ang) + model.center[1]])


def step_target(state: TargetState4, model: MotionModel, t: int, rng: np.random.Generator | None = None) -> TargetState4:
    """Advance a target from step ``t - 1`` to step ``t``."""
    if model.kind is MotionKind.STATIC:
        return state
    if model.kind is MotionKind.LINEAR:
        v = np.asarray(model.velocity, dtype=float)
        return TargetState4(state.p + v, v)
    if model.kind is MotionKind.SCRIPTED:
        row = model.script[min(t, len(model.script) - 1)]
        return TargetState4(np.asarray(row, dtype=float), state.v)
    if len(state.p) != 2:
        raise ValueError("spiral motion is planar")
    gamma = np.concatenate([spiral_waypoint(model, t) - spiral_waypoint(model, t - 1), np.zeros(2)])
    x = state.as_vector() + gamma
    if model.q_var > 0:
        if rng is None:
            raise ValueError("spiral motion with process noise needs an rng")
        x = x + np.asarray(model.noise_gain, dtype=float) @ (math.sqrt(model.q_var) * rng.standard_normal(2))
    return TargetState4(x[:2], x[2:])


@dataclass(frozen=True)
class TargetConfig:
    position: tuple[float, ...]
    motion: MotionModel = MotionModel()


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, seed-deterministic description of one experiment."""

    name: str = "scenario"
    dim: int = 2
    area_lower: tuple[float, ...] = (0.0, 0.0)
    area_upper: tuple[float, ...] = (10.0, 10.0)
    cell: float = 1.0
    n_agents: int = 4
    agent_positions: tuple[tuple[float, ...], ...] | None = None
    placement_per_trial: bool = False
    targets: tuple[TargetConfig, ...] = (TargetConfig((5.0, 5.0)),)
    beta_sigma: float = 0.001
    comm_range_fraction: float | None = 0.55
    mean_degree: float | None = None
    fov_range: float | None = None
    consensus_rounds: int = 20
    iterations: int = 100
    scheduler: SchedulerMode = SchedulerMode.RANDOM_SINGLE
    weight_mode: WeightMode = WeightMode.UNBIASED
    scheme: cons.Scheme = cons.Scheme.ISEEU
    trials: int = 1
    seed: int = 0
    oracle_dist: bool = False
    min_plugin_dist: float | None = None
    theta: float = DEFAULT_THETA
    refine_max_iters: int = 200
    refine_grad_tol: float = 1e-8

    def __post_init__(self):
        for name, enum_type in (("scheduler", SchedulerMode), ("weight_mode", WeightMode), ("scheme", cons.Scheme)):
            object.__setattr__(self, name, enum_type(getattr(self, name)))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.dim not in (2, 3):
            out.append("dim: must be 2 or 3")
        if len(self.area_lower) != self.dim or len(self.area_upper) != self.dim:
            out.append("area_lower/area_upper: length must equal dim")
        elif any(lo >= hi for lo, hi in zip(self.area_lower, self.area_upper)):
            out.append("area_upper: must exceed area_lower on every axis")
        positive = {"cell": self.cell, "n_agents": self.n_agents, "consensus_rounds": self.consensus_rounds,
                    "iterations": self.iterations, "trials": self.trials, "refine_max_iters": self.refine_max_iters,
                    "refine_grad_tol": self.refine_grad_tol}
        out += [f"{k}: must be positive" for k, v in positive.items() if not v > 0]
        if self.beta_sigma < 0:
            out.append("beta_sigma: must be non-negative")
        if (self.comm_range_fraction is None) == (self.mean_degree is None):
            out.append("comm_range_fraction/mean_degree: set exactly one")
        if self.comm_range_fraction is not None and self.comm_range_fraction <= 0:
            out.append("comm_range_fraction: must be positive")
        if self.mean_degree is not None and not 0 < self.mean_degree <= self.n_agents - 1:
            out.append("mean_degree: must lie in (0, n_agents - 1]")
        if self.fov_range is not None and self.fov_range <= 0:
            out.append("fov_range: must be positive")
        if self.min_plugin_dist is not None and self.min_plugin_dist <= 0:
            out.append("min_plugin_dist: must be positive")
        if not 0 < self.theta < 1:
            out.append("theta: must lie in (0, 1)")
        if self.seed < 0:
            out.append("seed: must be non-negative")
        if not self.targets:
            out.append("targets: at least one target required")
        for k, tg in enumerate(self.targets):
            if len(tg.position) != self.dim:
                out.append(f"targets[{k}].position: length must equal dim")
        if self.agent_positions is not None:
            if len(self.agent_positions) != self.n_agents:
                out.append("agent_positions: one position per agent required")
            elif any(len(p) != self.dim for p in self.agent_positions):
                out.append("agent_positions: length must equal dim")
            elif self.dim == len(self.area_lower) and not all(
                    all(lo - 1e-9 <= c <= hi + 1e-9 for c, lo, hi in zip(p, self.area_lower, self.area_upper))
                    for p in self.agent_positions):
                out.append("agent_positions: must lie inside the area")
        return out

    @property
    def grid(self) -> MoveGrid:
        return MoveGrid(self.cell, np.array(self.area_lower), np.array(self.area_upper))

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel.from_scale(self.beta_sigma)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.area_upper, self.area_lower)))

    @property
    def plugin_floor(self) -> float:
        return self.min_plugin_dist if self.min_plugin_dist is not None else 0.1 * self.cell


@dataclass
class TrialTrace:
    """Per-iteration record of one trial. Arrays are indexed by iteration first."""

    trial: int
    agent_positions: np.ndarray      # (T, n, d), after this iteration's moves
    meas_positions: np.ndarray       # (T, n, d), where the last round was measured
    target_positions: np.ndarray     # (T, K, d)
    estimates: np.ndarray            # (T, n, K, d), NaN where unavailable
    covariances: np.ndarray          # (T, n, K, d+1, d+1)
    volumes: np.ndarray              # (T, n, K)
    last_ranges: np.ndarray          # (T, n, K), NaN without a measurement edge
    n_measurements: np.ndarray       # (T,)
    reporter: np.ndarray             # (T,), agent whose estimate stands for the network
    decisions: list[ControlDecision] = field(default_factory=list)
    flags: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.n_measurements)

    def reported_estimates(self, target: int = 0) -> np.ndarray:
        idx = np.arange(len(self))
        return self.estimates[idx, self.reporter, target]


def grid_cells(cfg: ScenarioConfig) -> np.ndarray:
    counts = np.floor((np.subtract(cfg.area_upper, cfg.area_lower)) / cfg.cell + 1e-9).astype(int) + 1
    axes = [cfg.area_lower[k] + cfg.cell * np.arange(counts[k]) for k in range(cfg.dim)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cfg.dim)


def initial_agent_positions(cfg: ScenarioConfig, trial: int = 0) -> np.ndarray:
    if cfg.agent_positions is not None:
        return np.array(cfg.agent_positions, dtype=float)
    rng = make_rng(cfg.seed, STREAM_PLACEMENT, trial + 1 if cfg.placement_per_trial else 0, 0)
    cells = grid_cells(cfg)
    if len(cells) < cfg.n_agents:
        raise ValueError("area has fewer grid cells than agents")
    return cells[np.sort(rng.choice(len(cells), cfg.n_agents, replace=False))]


def comm_range_for(cfg: ScenarioConfig, positions: np.ndarray) -> float:
    if cfg.mean_degree is not None:
        return radius_for_mean_degree(positions, cfg.mean_degree)
    return cfg.comm_range_fraction * cfg.diagonal


def make_world(cfg: ScenarioConfig, t: int, positions: np.ndarray, target_positions: np.ndarray,
               comm_range: float) -> WorldState:
    fov = math.inf if cfg.fov_range is None else cfg.fov_range
    n = len(positions)
    agents = [Agent(i, positions[i], comm_range, fov) for i in range(n)]
    targets = [Target(n + k, target_positions[k]) for k in range(len(target_positions))]
    return WorldState.snapshot(t, agents, targets)


@dataclass
class PhaseResult:
    states: list[cons.NetworkState]  # one per target
    estimates: np.ndarray            # (n, K, d)
    covariances: np.ndarray          # (n, K, m, m)
    ok: np.ndarray                   # (n, K)
    last_ranges: np.ndarray          # (n, K)
    n_measurements: int


def plugin_distances(cfg: ScenarioConfig, positions: np.ndarray, true_target: np.ndarray,
                     ranges: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Distances used inside the noise weights for one target."""
    if cfg.oracle_dist:
        dist = np.linalg.norm(positions - true_target, axis=1)
    else:
        have_prior = np.all(np.isfinite(prior), axis=1)
        dist = np.where(have_prior, np.linalg.norm(positions - np.nan_to_num(prior), axis=1), ranges)
    return np.maximum(dist, cfg.plugin_floor)


def estimation_phase(cfg: ScenarioConfig, world: WorldState, prior: np.ndarray,
                     gens: dict[int, np.random.Generator]) -> PhaseResult:
    """Run ``consensus_rounds`` rounds, each with freshly drawn ranges."""
    n, K, d = len(world.agents), len(world.targets), cfg.dim
    positions = world.agent_positions
    target_pos = np.stack([tg.pos for tg in world.targets])
    W = world.comm.uniform_weights()
    B = world.comm.indicator()
    nm = cfg.noise
    A = lifted_design(positions)
    states = [cons.NetworkState.zeros(n, d + 1) for _ in range(K)]
    ranges = np.full((n, K), np.nan)
    count = 0
    for _ in range(cfg.consensus_rounds):
        ranges = np.full((n, K), np.nan)
        for m in measure_all(world, nm, gens):
            ranges[m.agent_id, m.target_id - n] = m.range
            count += 1
        for k in range(K):
            seen = np.isfinite(ranges[:, k])
            r = np.where(seen, ranges[:, k], 0.0)
            dist = plugin_distances(cfg, positions, target_pos[k], r, prior[:, k])
            w = row_weights(dist, nm.scale * dist, cfg.weight_mode, noiseless=nm.noiseless)
            w = np.where(seen, w, 0.0)
            M, v = cons.contributions(A, lifted_response(positions, r), w)
            states[k] = cons.step(cfg.scheme, states[k], W, B, M, v)
    est = np.full((n, K, d), np.nan)
    covs = np.full((n, K, d + 1, d + 1), np.nan)
    ok = np.zeros((n, K), dtype=bool)
    for k in range(K):
        x, c, good = cons.extract_estimates(states[k])
        est[:, k] = x[:, 1:]
        covs[:, k] = c
        ok[:, k] = good
    return PhaseResult(states, est, covs, ok, ranges, count)


@dataclass
class _TrialContext:
    cfg: ScenarioConfig
    trial: int
    positions: np.ndarray
    targets: list[TargetState4]
    comm_range: float
    prior: np.ndarray
    gens: dict[int, np.random.Generator]
    sched_rng: np.random.Generator
    target_rngs: list[np.random.Generator]
    decisions: list[ControlDecision] = field(default_factory=list)
    flags: list[tuple[int, str]] = field(default_factory=list)


def scheduler_step(ctx: _TrialContext, t: int) -> tuple[PhaseResult, int, np.ndarray]:
    """Estimation and control for one outer iteration.

    Returns the last phase's result, the acting agent of that phase and the
    positions at which it measured.
    """
    cfg = ctx.cfg
    target_pos = np.stack([s.p for s in ctx.targets])
    phase, actor, measured_at = None, -1, ctx.positions.copy()
    for actor in select_movers(cfg.scheduler, range(cfg.n_agents), ctx.sched_rng):
        world = make_world(cfg, t, ctx.positions, target_pos, ctx.comm_range)
        measured_at = ctx.positions.copy()
        phase = estimation_phase(cfg, world, ctx.prior, ctx.gens)
        ctx.prior = np.where(phase.ok[..., None], phase.estimates, ctx.prior)
        if not phase.ok[actor].all():
            ctx.flags.append((t, f"agent {actor}: estimate unavailable"))
            dec = ControlDecision(actor, ctx.positions[actor].copy(), math.inf, math.inf, [],
                                  flag="singular-information", t=t)
        else:
            P = [phase.states[k].P[actor] for k in range(len(ctx.targets))]
            dec = greedy_move(actor, ctx.positions[actor], P, list(phase.estimates[actor]), cfg.grid,
                              cfg.noise.scale, cfg.weight_mode, cfg.theta, cfg.plugin_floor, t)
            if dec.flag:
                ctx.flags.append((t, f"agent {actor}: {dec.flag}"))
        ctx.decisions.append(dec)
        ctx.positions = ctx.positions.copy()
        ctx.positions[actor] = dec.chosen_pos
    return phase, actor, measured_at


def run_trial(cfg: ScenarioConfig, trial_index: int = 0) -> TrialTrace:
    n, K, d, T = cfg.n_agents, len(cfg.targets), cfg.dim, cfg.iterations
    positions = initial_agent_positions(cfg, trial_index)
    ctx = _TrialContext(
        cfg=cfg,
        trial=trial_index,
        positions=positions,
        targets=[TargetState4.at(tg.position) for tg in cfg.targets],
        comm_range=comm_range_for(cfg, positions),
        prior=np.full((n, K, d), np.nan),
        gens={i: make_rng(cfg.seed, STREAM_MEASURE, trial_index, i) for i in range(n)},
        sched_rng=make_rng(cfg.seed, STREAM_SCHEDULE, trial_index, 0),
        target_rngs=[make_rng(cfg.seed, STREAM_TARGET, trial_index, k) for k in range(K)],
    )
    trace = TrialTrace(
        trial=trial_index,
        agent_positions=np.zeros((T, n, d)),
        meas_positions=np.zeros((T, n, d)),
        target_positions=np.zeros((T, K, d)),
        estimates=np.full((T, n, K, d), np.nan),
        covariances=np.full((T, n, K, d + 1, d + 1), np.nan),
        volumes=np.full((T, n, K), np.nan),
        last_ranges=np.full((T, n, K), np.nan),
        n_measurements=np.zeros(T, dtype=int),
        reporter=np.zeros(T, dtype=int),
    )
    for t in range(T):
        ctx.targets = [s if t == 0 and tg.motion.kind is not MotionKind.SCRIPTED else step_target(s, tg.motion, t, rng)
                       for s, tg, rng in zip(ctx.targets, cfg.targets, ctx.target_rngs)]
        phase, actor, measured_at = scheduler_step(ctx, t)
        trace.agent_positions[t] = ctx.positions
        trace.meas_positions[t] = measured_at
        trace.target_positions[t] = np.stack([s.p for s in ctx.targets])
        trace.estimates[t] = phase.estimates
        trace.covariances[t] = phase.covariances
        trace.last_ranges[t] = phase.last_ranges
        trace.n_measurements[t] = phase.n_measurements
        trace.reporter[t] = actor
        for i in range(n):
            for k in range(K):
                if phase.ok[i, k]:
                    trace.volumes[t, i, k] = math.exp(
                        log_volume_from_information(phase.states[k].P[i], cfg.theta))
    trace.decisions = ctx.decisions
    trace.flags = ctx.flags
    return trace


def run_monte_carlo(cfg: ScenarioConfig, threads: int = 1, trials: Sequence[int] | None = None) -> list[TrialTrace]:
    """Independent trials with disjoint random streams, returned in trial order."""
    indices = list(range(cfg.trials)) if trials is None else list(trials)
    if threads <= 1:
        return [run_trial(cfg, i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: run_trial(cfg, i), indices))
