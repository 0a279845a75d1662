"""Mission configuration, presets and TOML loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import J2_EARTH, MU_EARTH, R0_DEFAULT, R_EARTH, OrbitParams
from .guidance_env import NOMINAL_RADIUS, HlRewardWeights
from .motion_env import AVIARY_SCALE, REACH_RADIUS, LlRewardWeights, WaypointGains
from .rta import RtaParams

HILL = "hill"
TWOBODY_J2 = "twobody_j2"
FIDELITIES = (HILL, TWOBODY_J2)

# Default deputy starting points (m, Hill frame); close to graph cube vertices.
EXP2_STARTS = ((-202.7, 433.0, 172.2), (202.7, -433.0, 173.2), (202.7, 433.0, -173.2))


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class NoiseConfig:
    pos_noise_sigma: float = 0.0  # m, added to sensed positions
    accel_noise_sigma: float = 0.0  # m/s^2, process noise per axis
    actuation_latency_steps: int = 0

    def __post_init__(self):
        if self.pos_noise_sigma < 0 or self.accel_noise_sigma < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if int(self.actuation_latency_steps) != self.actuation_latency_steps or \
                self.actuation_latency_steps < 0:
            raise ConfigError("actuation_latency_steps must be a non-negative integer")

    @property
    def enabled(self) -> bool:
        return bool(self.pos_noise_sigma or self.accel_noise_sigma or self.actuation_latency_steps)


CP_PROXY_NOISE = NoiseConfig(pos_noise_sigma=0.5, accel_noise_sigma=0.01, actuation_latency_steps=2)


@dataclass(frozen=True)
class GraphConfig:
    count: int = 20
    nominal_radius: float = NOMINAL_RADIUS
    scale: tuple = tuple(AVIARY_SCALE)
    seed: int | None = None
    layout: str = "auto"


@dataclass(frozen=True)
class OrbitConfig:
    mu: float = MU_EARTH
    r0_mag: float = R0_DEFAULT
    j2: float = J2_EARTH
    earth_radius: float = R_EARTH

    def params(self) -> OrbitParams:
        return OrbitParams(mu=self.mu, r0_mag=self.r0_mag, j2=self.j2,
                           earth_radius=self.earth_radius)


@dataclass(frozen=True)
class PolicyFiles:
    hl: str | None = None
    ll: str | None = None


@dataclass(frozen=True)
class MissionConfig:
    n_agents: int = 3
    fidelity: str = HILL
    rta_enabled: bool = False
    noise: NoiseConfig = NoiseConfig()
    dt: float = 1.0
    time_cap: float = 5000.0
    initial_positions: tuple = EXP2_STARTS
    start_indices: tuple | None = None
    init_pos_sigma: float = 0.0
    init_vel_sigma: float = 0.0
    visit_radius: float = REACH_RADIUS
    radial_outward: bool = False
    seed: int = 0
    rta: RtaParams = RtaParams()
    ll_weights: LlRewardWeights = LlRewardWeights()
    hl_weights: HlRewardWeights = HlRewardWeights()
    graph: GraphConfig = GraphConfig()
    orbit: OrbitConfig = OrbitConfig()
    controller: WaypointGains = WaypointGains()
    policies: PolicyFiles = PolicyFiles()

    def __post_init__(self):
        if self.fidelity not in FIDELITIES:
            raise ConfigError(f"fidelity must be one of {FIDELITIES}, got {self.fidelity!r}")
        if not self.n_agents >= 1:
            raise ConfigError("n_agents must be at least 1")
        if not (self.time_cap > 0 and self.dt > 0):
            raise ConfigError("time_cap and dt must be positive")
        if self.visit_radius <= 0 or self.init_pos_sigma < 0 or self.init_vel_sigma < 0:
            raise ConfigError("visit_radius must be positive and jitter sigmas non-negative")
        if self.start_indices is not None:
            if len(self.start_indices) != self.n_agents:
                raise ConfigError("start_indices needs one entry per agent")
        else:
            pos = np.asarray(self.initial_positions, dtype=float)
            if pos.shape != (self.n_agents, 3):
                raise ConfigError(
                    f"initial_positions must have shape ({self.n_agents}, 3), got {pos.shape}")


PRESETS = {
    "exp1": dict(fidelity=HILL, rta_enabled=False, noise=NoiseConfig(),
                 init_pos_sigma=1.0, init_vel_sigma=0.05),
    "exp2": dict(fidelity=TWOBODY_J2, rta_enabled=True, noise=NoiseConfig(),
                 init_pos_sigma=1.0, init_vel_sigma=0.05),
    "cp-proxy": dict(fidelity=TWOBODY_J2, rta_enabled=True, noise=CP_PROXY_NOISE,
                     init_pos_sigma=1.0, init_vel_sigma=0.05),
}


def apply_preset(cfg: MissionConfig, name: str) -> MissionConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dataclasses.replace(cfg, **PRESETS[name])


_SECTIONS = {
    "noise": NoiseConfig,
    "rta": RtaParams,
    "ll_weights": LlRewardWeights,
    "hl_weights": HlRewardWeights,
    "graph": GraphConfig,
    "orbit": OrbitConfig,
    "controller": WaypointGains,
    "policies": PolicyFiles,
}


def _build_section(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = {}
    for k, v in table.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def config_from_dict(doc: dict[str, Any], base: MissionConfig | None = None) -> MissionConfig:
    """Overlay a parsed document on ``base`` (defaults when omitted). Unknown keys are rejected."""
    base = base or MissionConfig()
    top = {f.name for f in dataclasses.fields(MissionConfig)}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    changes = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            current = dataclasses.asdict(getattr(base, key))
            current.update(value)
            changes[key] = _build_section(_SECTIONS[key], current, key)
        elif key in ("initial_positions", "start_indices"):
            changes[key] = None if value is None else tuple(
                tuple(v) if isinstance(v, list) else v for v in value)
        else:
            changes[key] = value
    if "initial_positions" in changes and "start_indices" not in changes:
        changes["start_indices"] = None
    try:
        return dataclasses.replace(base, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base: MissionConfig | None = None) -> MissionConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
    return config_from_dict(doc, base)
