"""Noisy range measurements with distance-proportional Gaussian noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from rangeloc.world import Agent, Target, WorldState

# Tags separating the independent random streams of one trial.
STREAM_MEASURE = 0
STREAM_SCHEDULE = 1
STREAM_TARGET = 2
STREAM_PLACEMENT = 3


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based (Philox) stream addressed by ``seed`` and an integer key.

    Streams for different keys are independent, so trials and agents can be
    generated in any order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class NoiseModel:
    """``sigma_i = beta * sigma_hat * ||s_i - p||``."""

    sigma_hat: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.sigma_hat < 0 or self.beta < 0:
            raise ValueError("sigma_hat and beta must be non-negative")

    @classmethod
    def from_scale(cls, beta_sigma: float) -> "NoiseModel":
        return cls(sigma_hat=1.0, beta=beta_sigma)

    @property
    def scale(self) -> float:
        return self.beta * self.sigma_hat

    @property
    def noiseless(self) -> bool:
        return self.scale == 0.0


@dataclass(frozen=True)
class Measurement:
    agent_id: int
    target_id: int
    range: float
    sigma: float
    t: int = 0
    clamped: bool = False


def sigma_of(agent_pos, target_pos, nm: NoiseModel) -> float:
    return nm.scale * float(np.linalg.norm(np.asarray(agent_pos, float) - np.asarray(target_pos, float)))


def measure(agent: Agent, target: Target, nm: NoiseModel, rng: np.random.Generator, t: int = 0) -> Measurement:
    dist = float(np.linalg.norm(agent.pos - target.pos))
    sigma = nm.scale * dist
    # always draw so the stream position does not depend on the noise level
    r = dist + sigma * rng.standard_normal()
    clamped = r < 0.0
    return Measurement(agent.id, target.id, max(r, 0.0), sigma, t, clamped)


def measure_all(world: WorldState, nm: NoiseModel,
                rng: np.random.Generator | Mapping[int, np.random.Generator]) -> list[Measurement]:
    """One measurement per measurement-graph edge, in (agent_id, target_id) order.

    ``rng`` may be a single generator or a per-agent mapping of generators.
    """
    agents = {a.id: a for a in world.agents}
    targets = {k.id: k for k in world.targets}
    out = []
    for i, k in sorted(world.meas.edges):
        gen = rng[i] if isinstance(rng, Mapping) else rng
        out.append(measure(agents[i], targets[k], nm, gen, world.t))
    return out


def draw_ranges(dist: np.ndarray, sigma: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Vectorized range model: ``max(dist + sigma * noise, 0)``."""
    return np.maximum(dist + sigma * noise, 0.0)


MEASUREMENT_LOG_COLUMNS = ("t", "agent_id", "target_id", "range", "sigma")


def write_measurement_log(path, measurements: Iterable[Measurement]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_LOG_COLUMNS)
        for m in measurements:
            writer.writerow([m.t, m.agent_id, m.target_id, repr(m.range), repr(m.sigma)])


def read_measurement_log(path) -> list[Measurement]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Measurement(int(r["agent_id"]), int(r["target_id"]), float(r["range"]),
                        float(r["sigma"]), int(r["t"])) for r in rows]
