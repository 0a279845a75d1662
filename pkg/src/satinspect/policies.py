"""Policies driving the two control levels.

Low-level policies map a deputy's relative state and goal to a thrust
action in [-1, 1]^3 (fraction of the per-axis bound). High-level policies
map the routing observation to one graph index per agent.

Feed-forward networks are loaded from a JSON document::

    {
      "layer_dims": [6, 64, 64, 3],
      "weights": [W1, W2, W3],          # W_k has shape (layer_dims[k+1], layer_dims[k]), row-major
      "biases": [b1, b2, b3],
      "activations": ["tanh", "tanh"],  # one per hidden layer; the output layer is linear
      "head": {"type": "continuous_clip"}
    }

or, for routing, ``"head": {"type": "discrete_argmax_per_agent", "n_agents": 3,
"n_points": 20}``. A low-level network reads the 6-vector observation
(scaled goal offset, velocity); a routing network reads the agent point
indices followed by the visited mask as 0/1 floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .dynamics import RelativeState
from .guidance_env import HlObservation, InspectionGraph, greedy_planner
from .motion_env import LlEpisode, WaypointGains, baseline_waypoint_controller, ll_observe

ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    "linear": lambda x: x,
}
CONTINUOUS = "continuous_clip"
DISCRETE = "discrete_argmax_per_agent"


class PolicyFormatError(ValueError):
    """Malformed policy document, bad shapes or an unknown activation."""


@dataclass(frozen=True)
class MlpPolicy:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[str, ...]
    head: dict

    def __post_init__(self):
        dims = self.layer_dims
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise PolicyFormatError("layer_dims needs at least input and output sizes")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise PolicyFormatError("need one weight matrix and bias per layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[k + 1], dims[k]):
                raise PolicyFormatError(
                    f"layer {k}: weight shape {W.shape} != {(dims[k + 1], dims[k])}")
            if b.shape != (dims[k + 1],):
                raise PolicyFormatError(f"layer {k}: bias shape {b.shape} != {(dims[k + 1],)}")
        if len(self.activations) != len(dims) - 2:
            raise PolicyFormatError("need exactly one activation per hidden layer")
        for name in self.activations:
            if name not in ACTIVATIONS:
                raise PolicyFormatError(f"unknown activation {name!r}")
        kind = self.head.get("type")
        if kind == CONTINUOUS:
            if dims[-1] != 3:
                raise PolicyFormatError("continuous head needs 3 outputs")
        elif kind == DISCRETE:
            try:
                blocks = int(self.head["n_agents"]) * int(self.head["n_points"])
            except (KeyError, TypeError, ValueError) as exc:
                raise PolicyFormatError("discrete head needs n_agents and n_points") from exc
            if dims[-1] != blocks:
                raise PolicyFormatError(f"discrete head needs {blocks} outputs, got {dims[-1]}")
        else:
            raise PolicyFormatError(f"unknown head type {kind!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def forward(self, x) -> np.ndarray:
        """Raw network output (before the head)."""
        h = np.asarray(x, dtype=float).reshape(-1)
        if h.size != self.input_dim:
            raise ValueError(f"expected observation of length {self.input_dim}, got {h.size}")
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = W @ h + b
            if k < last:
                h = ACTIVATIONS[self.activations[k]](h)
        return h

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": list(self.activations),
            "head": dict(self.head),
        }


def policy_from_dict(doc: dict) -> MlpPolicy:
    try:
        dims = tuple(int(d) for d in doc["layer_dims"])
        weights = tuple(np.array(W, dtype=float, ndmin=2) for W in doc["weights"])
        biases = tuple(np.array(b, dtype=float).reshape(-1) for b in doc["biases"])
        activations = tuple(str(a) for a in doc.get("activations", []))
        head = dict(doc["head"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"malformed policy document: {exc}") from exc
    return MlpPolicy(dims, weights, biases, activations, head)


def load_policy(path) -> MlpPolicy:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PolicyFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise PolicyFormatError(f"{path}: top level must be an object")
    return policy_from_dict(doc)


def save_policy(policy: MlpPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=1))


def policy_act(policy: MlpPolicy, observation) -> np.ndarray:
    """Continuous head: output clipped to [-1, 1]. Discrete head: argmax per agent block."""
    out = policy.forward(observation)
    if policy.head["type"] == CONTINUOUS:
        return np.clip(out, -1.0, 1.0)
    n_agents, n_points = int(policy.head["n_agents"]), int(policy.head["n_points"])
    # np.argmax returns the first maximum, i.e. the lowest index on ties.
    return np.argmax(out.reshape(n_agents, n_points), axis=1)


class LowLevelPolicy(Protocol):
    def __call__(self, state: RelativeState, goal: np.ndarray) -> np.ndarray: ...


class HighLevelPolicy(Protocol):
    def __call__(self, obs: HlObservation, graph: InspectionGraph, claimed: Sequence[int],
                 planning: Sequence[bool]) -> list[int]: ...


@dataclass(frozen=True)
class WaypointPolicy:
    """Baseline feedback-linearizing PD controller."""

    n: float
    mass: float = 1.0
    gains: WaypointGains = WaypointGains()
    u_c: float = 1.0

    def __call__(self, state, goal):
        return baseline_waypoint_controller(state, goal, self.n, self.mass, self.gains, self.u_c)


@dataclass(frozen=True)
class MlpLowLevelPolicy:
    policy: MlpPolicy

    def __post_init__(self):
        if self.policy.head["type"] != CONTINUOUS or self.policy.input_dim != 6:
            raise PolicyFormatError("low-level network needs 6 inputs and a continuous head")

    def __call__(self, state, goal):
        obs = ll_observe(LlEpisode(state, np.asarray(goal, dtype=float)))
        return policy_act(self.policy, obs.as_vector())


class GreedyPolicy:
    """Baseline nearest-unvisited router."""

    def __call__(self, obs, graph, claimed=(), planning=None):
        return greedy_planner(obs, graph, claimed, planning)


@dataclass(frozen=True)
class MlpHighLevelPolicy:
    policy: MlpPolicy

    def __post_init__(self):
        if self.policy.head["type"] != DISCRETE:
            raise PolicyFormatError("routing network needs a discrete head")

    def __call__(self, obs, graph, claimed=(), planning=None):
        choice = policy_act(self.policy, obs.as_vector())
        action = list(obs.agent_point_indices)
        for i in range(len(action)):
            if planning is None or planning[i]:
                action[i] = int(choice[i])
        return action
