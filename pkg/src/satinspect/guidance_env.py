"""Multi-agent routing over a fixed graph of inspection points.

Agents hop between points of the graph (teleport semantics); the team
shares one reward penalizing travel, revisits and conflicting choices.
Also holds a nearest-neighbour planner and an exhaustive optimal router
for small instances, used to bound the planner's cost.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .motion_env import AVIARY_SCALE

NOMINAL_RADIUS = 300.0  # m
BRUTE_FORCE_MAX_POINTS = 8
BRUTE_FORCE_MAX_AGENTS = 3


class GraphIndexError(IndexError):
    """Raised for an action referencing a point outside the graph."""


class InstanceTooLargeError(ValueError):
    """Raised when the exhaustive router is asked for an oversized instance."""


@dataclass
class InspectionGraph:
    points: np.ndarray  # (m, 3) Hill-frame coordinates
    visited: np.ndarray = None  # (m,) bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.visited is None:
            self.visited = np.zeros(len(self.points), dtype=bool)
        else:
            self.visited = np.asarray(self.visited, dtype=bool).copy()
        if self.visited.shape != (len(self.points),):
            raise ValueError("visited mask length must equal the number of points")

    def __len__(self) -> int:
        return len(self.points)

    def copy(self) -> "InspectionGraph":
        return InspectionGraph(self.points.copy(), self.visited.copy())

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.points[i] - self.points[j]))

    def nearest(self, pos) -> int:
        return int(np.argmin(np.linalg.norm(self.points - np.asarray(pos, dtype=float), axis=1)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "y", "z"])
            for i, p in enumerate(self.points):
                w.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])

    @classmethod
    def from_csv(cls, path) -> "InspectionGraph":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["index"]))
        return cls(np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]))


def dodecahedron_directions() -> np.ndarray:
    """The 20 unit vertices of a regular dodecahedron, cube vertices first."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [np.array(v, dtype=float) for v in itertools.product((-1, 1), repeat=3)]
    for a, b in itertools.product((-1, 1), repeat=2):
        verts.append(np.array([0.0, a / phi, b * phi]))
        verts.append(np.array([a / phi, b * phi, 0.0]))
        verts.append(np.array([a * phi, 0.0, b / phi]))
    d = np.array(verts)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def fibonacci_directions(count: int) -> np.ndarray:
    """Quasi-uniform unit vectors on the sphere (golden-angle spiral)."""
    k = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(count)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _random_rotation(seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def build_graph(count: int = 20, nominal_radius: float = NOMINAL_RADIUS, scale=AVIARY_SCALE,
                seed=None, layout: str = "auto") -> InspectionGraph:
    """Inspection points on the ellipsoid with semi-axes ``nominal_radius * scale``.

    ``layout`` is ``"dodecahedron"`` (only for 20 points), ``"fibonacci"``, or
    ``"auto"``, which picks the dodecahedron when ``count == 20``. A seed
    applies a reproducible random rotation to the unit directions before
    scaling; ``None`` keeps the canonical orientation.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if layout == "auto":
        layout = "dodecahedron" if count == 20 else "fibonacci"
    if layout == "dodecahedron":
        if count != 20:
            raise ValueError("dodecahedron layout has exactly 20 points")
        dirs = dodecahedron_directions()
    elif layout == "fibonacci":
        dirs = fibonacci_directions(count)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if seed is not None:
        dirs = dirs @ _random_rotation(seed).T
    semi = nominal_radius * np.asarray(scale, dtype=float)
    return InspectionGraph(dirs * semi)


@dataclass(frozen=True)
class HlObservation:
    agent_point_indices: tuple[int, ...]
    visited: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.agent_point_indices, dtype=float),
                               self.visited.astype(float)])


@dataclass(frozen=True)
class HlRewardWeights:
    alpha: float = 1.0 / NOMINAL_RADIUS  # per metre
    beta: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.nu) < 0:
            raise ValueError("reward weights must be non-negative")


def _check_indices(indices: Sequence[int], count: int) -> None:
    for i in indices:
        if not 0 <= int(i) < count:
            raise GraphIndexError(f"point index {i} outside graph of {count} points")


def hl_reward(joint_action: Sequence[int], prev_visited, prev_actions: Sequence[int],
              w: HlRewardWeights, points) -> float:
    """Shared team reward (always <= 0).

    Per agent: travel distance times ``alpha``, ``beta`` if the chosen point
    was already visited before this step, and ``nu`` if another agent chose
    the same point. An agent holding its current point is not charged the
    revisit penalty.
    """
    points = np.asarray(points, dtype=float)
    prev_visited = np.asarray(prev_visited, dtype=bool)
    total = 0.0
    for i, (a, a_prev) in enumerate(zip(joint_action, prev_actions)):
        total += w.alpha * float(np.linalg.norm(points[a] - points[a_prev]))
        if a != a_prev and prev_visited[a]:
            total += w.beta
        if any(a == b for k, b in enumerate(joint_action) if k != i):
            total += w.nu
    return -total


@dataclass
class HlEpisode:
    graph: InspectionGraph
    agent_indices: list[int]
    t: int = 0
    done: bool = False

    def observe(self) -> HlObservation:
        return HlObservation(tuple(self.agent_indices), self.graph.visited.copy())


def hl_reset(graph: InspectionGraph, n_agents: int = 3, seed=None,
             start_indices: Sequence[int] | None = None) -> HlEpisode:
    """Fresh episode; agents start on uniformly drawn points, which count as visited."""
    g = InspectionGraph(graph.points.copy())
    if start_indices is None:
        rng = np.random.default_rng(seed)
        start_indices = [int(i) for i in rng.integers(0, len(g), n_agents)]
    _check_indices(start_indices, len(g))
    g.visited[list(start_indices)] = True
    return HlEpisode(g, list(start_indices), done=bool(g.visited.all()))


def hl_step(ep: HlEpisode, joint_action: Sequence[int], w: HlRewardWeights = HlRewardWeights()):
    """Move every agent to its chosen point; returns ``(observation, reward, done)``."""
    joint_action = [int(a) for a in joint_action]
    if len(joint_action) != len(ep.agent_indices):
        raise ValueError("one action per agent required")
    _check_indices(joint_action, len(ep.graph))
    prev_visited = ep.graph.visited.copy()
    reward = hl_reward(joint_action, prev_visited, ep.agent_indices, w, ep.graph.points)
    ep.graph.visited[joint_action] = True
    ep.agent_indices = joint_action
    ep.t += 1
    ep.done = bool(ep.graph.visited.all())
    return ep.observe(), reward, ep.done


def greedy_planner(obs: HlObservation, graph: InspectionGraph, claimed: Sequence[int] = (),
                   planning: Sequence[bool] | None = None) -> list[int]:
    """Nearest-unvisited assignment, agents in id order, ties to the lowest index.

    ``claimed`` lists points already taken by agents that are not planning
    this step; ``planning`` masks which agents choose (others hold). Agents
    left without an unvisited unclaimed point hold position.
    """
    taken = set(int(c) for c in claimed)
    visited = np.asarray(obs.visited, dtype=bool)
    action = list(obs.agent_point_indices)
    for i, here in enumerate(obs.agent_point_indices):
        if planning is not None and not planning[i]:
            continue
        best, best_d = None, math.inf
        for j in range(len(graph)):
            if visited[j] or j in taken:
                continue
            d = graph.distance(here, j)
            if d < best_d:
                best, best_d = j, d
        if best is not None:
            action[i] = best
            taken.add(best)
    return action


def tour_cost(sequences: Sequence[Sequence[int]], points) -> float:
    """Summed leg lengths over every agent's ordered point sequence."""
    points = np.asarray(points, dtype=float)
    total = 0.0
    for seq in sequences:
        for a, b in zip(seq[:-1], seq[1:]):
            total += float(np.linalg.norm(points[b] - points[a]))
    return total


def greedy_rollout(points, start_indices: Sequence[int],
                   w: HlRewardWeights = HlRewardWeights()) -> tuple[list[list[int]], float]:
    """Run the greedy planner to completion; returns per-agent sequences and their cost."""
    g = InspectionGraph(points)
    ep = hl_reset(g, start_indices=start_indices)
    seqs = [[s] for s in start_indices]
    for _ in range(len(g) + 1):
        if ep.done:
            break
        act = greedy_planner(ep.observe(), ep.graph)
        for i, a in enumerate(act):
            if a != seqs[i][-1]:
                seqs[i].append(a)
        hl_step(ep, act, w)
    return seqs, tour_cost(seqs, g.points)


@dataclass(frozen=True)
class RoutingSolution:
    sequences: tuple[tuple[int, ...], ...]
    cost: float


def brute_force_router(points, n_agents: int, start_indices: Sequence[int]) -> RoutingSolution:
    """Exhaustive minimum-distance coverage routing for small instances.

    Every point not already occupied by an agent is assigned to exactly one
    agent and every per-agent ordering is enumerated. Ties (within 1e-9 m)
    go to the lexicographically smallest tuple of sequences.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    m = len(points)
    if m > BRUTE_FORCE_MAX_POINTS or n_agents > BRUTE_FORCE_MAX_AGENTS:
        raise InstanceTooLargeError(
            f"brute force limited to {BRUTE_FORCE_MAX_POINTS} points and "
            f"{BRUTE_FORCE_MAX_AGENTS} agents (got {m}, {n_agents})")
    if len(start_indices) != n_agents or n_agents < 1:
        raise ValueError("need one start index per agent")
    _check_indices(start_indices, m)
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    todo = [p for p in range(m) if p not in set(start_indices)]

    best_path: dict[tuple[int, tuple[int, ...]], tuple[float, tuple[int, ...]]] = {}

    def path_for(agent: int, subset: tuple[int, ...]):
        key = (agent, subset)
        if key not in best_path:
            start = start_indices[agent]
            best = (math.inf, ())
            for order in itertools.permutations(subset):
                c, prev = 0.0, start
                for p in order:
                    c += dist[prev, p]
                    prev = p
                cand = (c, (start,) + order)
                if c < best[0] - 1e-9 or (abs(c - best[0]) <= 1e-9 and cand[1] < best[1]):
                    best = cand
            best_path[key] = best
        return best_path[key]

    best_cost, best_seqs = math.inf, None
    for assign in itertools.product(range(n_agents), repeat=len(todo)):
        total = 0.0
        seqs = []
        for agent in range(n_agents):
            subset = tuple(p for p, a in zip(todo, assign) if a == agent)
            c, seq = path_for(agent, subset)
            total += c
            seqs.append(seq)
        seqs = tuple(seqs)
        if total < best_cost - 1e-9 or (abs(total - best_cost) <= 1e-9 and seqs < best_seqs):
            best_cost, best_seqs = total, seqs
    return RoutingSolution(best_seqs, float(tour_cost(best_seqs, points)))


def random_instance(count: int, n_agents: int, seed=None) -> tuple[np.ndarray, list[int]]:
    """Points drawn uniformly in the scaled inspection box; agents start on the first points."""
    if not 1 <= n_agents <= count:
        raise ValueError("need 1 <= n_agents <= count")
    rng = np.random.default_rng(seed)
    half = NOMINAL_RADIUS * np.asarray(AVIARY_SCALE, dtype=float)
    return rng.uniform(-half, half, size=(count, 3)), list(range(n_agents))
