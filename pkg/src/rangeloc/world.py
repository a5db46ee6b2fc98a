"""Agents, targets and the communication / measurement graphs between them."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def as_position(coords) -> np.ndarray:
    pos = np.asarray(coords, dtype=float)
    if pos.ndim != 1 or pos.size not in (2, 3):
        raise ValueError(f"position must be a 2- or 3-vector, got shape {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError(f"position must be finite, got {pos}")
    return pos


@dataclass(frozen=True)
class Agent:
    id: int
    pos: np.ndarray
    comm_range: float
    fov_range: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "pos", as_position(self.pos))
        if self.comm_range <= 0 or self.fov_range <= 0:
            raise ValueError("comm_range and fov_range must be positive")

    def moved(self, pos) -> "Agent":
        return Agent(self.id, pos, self.comm_range, self.fov_range)


@dataclass(frozen=True)
class Target:
    id: int
    pos: np.ndarray
    motion: object = None

    def __post_init__(self):
        object.__setattr__(self, "pos", as_position(self.pos))


@dataclass(frozen=True)
class CommGraph:
    """Undirected agent graph. ``neighbors[i]`` always contains ``i``."""

    ids: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    neighbors: dict[int, frozenset[int]] = field(hash=False)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def indicator(self) -> np.ndarray:
        """0/1 matrix of closed neighbourhoods, rows/cols in ``ids`` order."""
        index = {a: k for k, a in enumerate(self.ids)}
        out = np.zeros((len(self.ids), len(self.ids)))
        for i in self.ids:
            for j in self.neighbors[i]:
                out[index[i], index[j]] = 1.0
        return out

    def uniform_weights(self) -> np.ndarray:
        """Row-stochastic weights ``1/|N_i|`` over each closed neighbourhood."""
        ind = self.indicator()
        return ind / ind.sum(axis=1, keepdims=True)

    def degrees(self) -> np.ndarray:
        return self.indicator().sum(axis=1) - 1.0


@dataclass(frozen=True)
class MeasGraph:
    edges: frozenset[tuple[int, int]]  # (agent_id, target_id)

    def targets_of(self, agent_id: int) -> list[int]:
        return sorted(k for i, k in self.edges if i == agent_id)


def _graph_from_edges(ids: Sequence[int], edges) -> CommGraph:
    nbrs = {i: {i} for i in ids}
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    return CommGraph(tuple(ids), frozenset(edges), {i: frozenset(s) for i, s in nbrs.items()})


def build_comm_graph(agents: Sequence[Agent]) -> CommGraph:
    """Link agents whose distance is within both of their communication ranges.

    The boundary is inclusive: an agent pair at exactly ``comm_range`` apart
    is connected.
    """
    if not agents:
        raise ValueError("need at least one agent")
    ids = [a.id for a in agents]
    if len(set(ids)) != len(ids):
        raise ValueError("agent ids must be unique")
    pos = np.stack([a.pos for a in agents])
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    ranges = np.array([a.comm_range for a in agents])
    reach = np.minimum(ranges[:, None], ranges[None, :])
    edges = set()
    n = len(agents)
    for a in range(n):
        for b in range(a + 1, n):
            if dist[a, b] <= reach[a, b]:
                i, j = ids[a], ids[b]
                edges.add((min(i, j), max(i, j)))
    return _graph_from_edges(ids, edges)


def comm_graph_from_adjacency(ids: Sequence[int], adjacency: np.ndarray) -> CommGraph:
    adjacency = np.asarray(adjacency, dtype=bool)
    n = len(ids)
    edges = {(min(ids[a], ids[b]), max(ids[a], ids[b]))
             for a in range(n) for b in range(a + 1, n) if adjacency[a, b] or adjacency[b, a]}
    return _graph_from_edges(ids, edges)


def build_meas_graph(agents: Sequence[Agent], targets: Sequence[Target]) -> MeasGraph:
    edges = set()
    for a in agents:
        for tg in targets:
            if np.linalg.norm(a.pos - tg.pos) <= a.fov_range:
                edges.add((a.id, tg.id))
    return MeasGraph(frozenset(edges))


def is_connected(g: CommGraph) -> bool:
    if not g.ids:
        return True
    seen = {g.ids[0]}
    queue = deque([g.ids[0]])
    while queue:
        i = queue.popleft()
        for j in g.neighbors[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == len(g.ids)


def radius_for_mean_degree(positions: np.ndarray, mean_degree: float) -> float:
    """Smallest common range giving an average node degree of at least ``mean_degree``."""
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    iu = np.triu_indices(n, 1)
    dist = np.sort(np.linalg.norm(positions[:, None] - positions[None], axis=-1)[iu])
    n_edges = int(math.ceil(mean_degree * n / 2 - 1e-9))
    if n_edges <= 0:
        return float(dist[0]) / 2 if len(dist) else 1.0
    if n_edges > len(dist):
        raise ValueError(f"mean degree {mean_degree} unreachable with {n} agents")
    return float(dist[n_edges - 1])


@dataclass(frozen=True)
class WorldState:
    t: int
    agents: tuple[Agent, ...]
    targets: tuple[Target, ...]
    comm: CommGraph
    meas: MeasGraph

    @classmethod
    def snapshot(cls, t: int, agents: Sequence[Agent], targets: Sequence[Target]) -> "WorldState":
        agents = tuple(sorted(agents, key=lambda a: a.id))
        targets = tuple(sorted(targets, key=lambda k: k.id))
        agent_ids = {a.id for a in agents}
        if agent_ids & {k.id for k in targets}:
            raise ValueError("agent and target ids must be disjoint")
        return cls(t, agents, targets, build_comm_graph(agents), build_meas_graph(agents, targets))

    @property
    def agent_positions(self) -> np.ndarray:
        return np.stack([a.pos for a in self.agents])
