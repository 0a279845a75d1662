"""Single-agent point-to-point environment under CW dynamics.

An episode starts from a random relative position and a random goal,
both drawn uniformly from a box scaled to the aviary dimensions, and ends
when the deputy gets within 10 m of the goal, leaves the bounding box, or
runs past 500 s.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import RelativeState, cw_matrices, cw_step

AVIARY_SCALE = np.array([1.17, 2.5, 1.0])
INIT_HALF_WIDTH = 240.0  # m
BOUND_HALF_WIDTH = 480.0  # m, before scaling
OBS_SCALE = 1000.0
REACH_RADIUS = 10.0  # m
EPISODE_LIMIT = 500.0  # s

RUNNING, REACHED, OUT_OF_BOUNDS, TIMEOUT = "running", "reached", "out_of_bounds", "timeout"


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


@dataclass(frozen=True)
class LlObservation:
    scaled_goal_offset: np.ndarray
    vel: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.scaled_goal_offset, self.vel])


@dataclass(frozen=True)
class LlRewardWeights:
    alpha: float = 1.0
    beta: float = 0.5
    nu: float = 0.1
    speed_coeff: float = 0.005  # 1/s, the product of the speed-limit slope and scale

    def __post_init__(self):
        if min(self.alpha, self.beta, self.nu, self.speed_coeff) < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass(frozen=True)
class LlEpisode:
    state: RelativeState
    goal: np.ndarray
    t: float = 0.0
    bounds: np.ndarray = BOUND_HALF_WIDTH * AVIARY_SCALE
    status: str = RUNNING

    @property
    def goal_distance(self) -> float:
        return float(np.linalg.norm(self.state.pos - self.goal))


def episode_from_draws(x, y) -> LlEpisode:
    """Episode starting at ``scale * x`` with goal ``scale * y`` and zero velocity."""
    pos = AVIARY_SCALE * np.asarray(x, dtype=float)
    goal = AVIARY_SCALE * np.asarray(y, dtype=float)
    return LlEpisode(RelativeState(pos, np.zeros(3)), goal)


def ll_reset(seed=None) -> LlEpisode:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, 3)
    y = rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, 3)
    return episode_from_draws(x, y)


def ll_observe(ep: LlEpisode) -> LlObservation:
    return LlObservation((ep.state.pos - ep.goal) / OBS_SCALE, ep.state.vel.copy())


def ll_reward(prev_pos, ep: LlEpisode, w: LlRewardWeights) -> float:
    """Shaped distance reward with a distance-dependent speed penalty.

    The speed test uses the Euclidean norm; the penalty itself is the
    1-norm of the velocity.
    """
    d = ep.goal_distance
    d_prev = float(np.linalg.norm(np.asarray(prev_pos, dtype=float) - ep.goal))
    vel = ep.state.vel
    reward = w.alpha / (d + 1.0) + w.beta * (d_prev - d)
    if np.linalg.norm(vel) > w.speed_coeff * d:
        reward -= w.nu * float(np.sum(np.abs(vel)))
    return reward


def _status(state: RelativeState, goal, t: float, bounds) -> str:
    if np.linalg.norm(state.pos - goal) < REACH_RADIUS:
        return REACHED
    if np.any(np.abs(state.pos) > bounds):
        return OUT_OF_BOUNDS
    if t >= EPISODE_LIMIT:
        return TIMEOUT
    return RUNNING


def ll_step(ep: LlEpisode, action, n: float, mass: float = 1.0, dt: float = 1.0,
            u_c=1.0, weights: LlRewardWeights | None = None):
    """Apply one clipped action; returns ``(observation, reward, episode)``.

    The action is a fraction of the per-axis thrust bound ``u_c``.
    """
    if ep.status != RUNNING:
        raise EpisodeFinishedError(f"episode already finished ({ep.status})")
    thrust = np.clip(np.asarray(action, dtype=float), -1.0, 1.0) * u_c
    state = cw_step(ep.state, thrust, n, mass, dt)
    t = ep.t + dt
    nxt = replace(ep, state=state, t=t, status=_status(state, ep.goal, t, ep.bounds))
    reward = ll_reward(ep.state.pos, nxt, weights or LlRewardWeights())
    return ll_observe(nxt), reward, nxt


@dataclass(frozen=True)
class WaypointGains:
    kp: float = 3e-4  # 1/s^2
    kd: float = 0.035  # 1/s


def baseline_waypoint_controller(state: RelativeState, goal, n: float, mass: float = 1.0,
                                 gains: WaypointGains = WaypointGains(), u_c=1.0) -> np.ndarray:
    """PD tracking with the CW drift cancelled, as a fraction of ``u_c`` clipped to [-1, 1]."""
    A, B = cw_matrices(n)
    pos, vel = state.pos, state.vel
    err = np.asarray(goal, dtype=float) - pos
    u_raw = mass * (-A @ pos - B @ vel + gains.kp * err - gains.kd * vel)
    return np.clip(u_raw / u_c, -1.0, 1.0)
