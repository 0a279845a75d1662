"""Translational dynamics for the chief/deputy formation.

Two fidelity levels are provided:

* linearized Clohessy-Wiltshire (CW) motion of a deputy in the chief's
  Hill frame, and
* two-body motion with the J2 zonal perturbation in the Earth-centered
  inertial (ECI) frame,

together with the rotation and state transforms between the two frames.
Everything is in SI units (m, m/s, s, kg, N).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

MU_EARTH = 3.986004418e14  # m^3/s^2
J2_EARTH = 1.08262668e-3
R_EARTH = 6.3781e6  # m
R0_DEFAULT = 7.0e6  # m, chief orbit radius


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


class IntegrationError(ArithmeticError):
    """Raised when a propagation step produces a non-finite state."""


class FrameError(ValueError):
    """Raised when the Hill frame cannot be constructed from a chief state."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


def mean_motion(mu: float, r0_mag: float) -> float:
    """Mean motion ``sqrt(mu / r0^3)`` of a circular orbit of radius ``r0_mag``."""
    if not (mu > 0 and r0_mag > 0):
        raise DomainError(f"mean_motion needs mu > 0 and r0 > 0 (got {mu}, {r0_mag})")
    return float(np.sqrt(mu / r0_mag**3))


@dataclass(frozen=True)
class OrbitParams:
    """Central-body constants plus the chief's circular orbit radius."""

    mu: float = MU_EARTH
    r0_mag: float = R0_DEFAULT
    n: float = field(default=float("nan"))
    j2: float = J2_EARTH
    earth_radius: float = R_EARTH

    def __post_init__(self):
        if not (self.mu > 0 and self.r0_mag > 0 and self.earth_radius > 0):
            raise DomainError("mu, r0_mag and earth_radius must be strictly positive")
        if not self.j2 >= 0:
            raise DomainError("j2 must be non-negative")
        if np.isnan(self.n):
            object.__setattr__(self, "n", mean_motion(self.mu, self.r0_mag))
        if not self.n > 0:
            raise DomainError("mean motion must be strictly positive")
        if abs(self.n**2 * self.r0_mag**3 - self.mu) > 1e-12 * self.mu:
            raise DomainError("n^2 * r0^3 must equal mu")


@dataclass(frozen=True)
class RelativeState:
    """Deputy position and velocity relative to the chief, resolved in Hill's frame."""

    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        pos = _vec3(self.pos, "pos")
        vel = _vec3(self.vel, "vel")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("RelativeState components must be finite")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "vel", vel)

    @classmethod
    def zero(cls) -> "RelativeState":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, x) -> "RelativeState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


@dataclass(frozen=True)
class InertialState:
    """ECI position, velocity and mass of one spacecraft."""

    pos: np.ndarray
    vel: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        pos = _vec3(self.pos, "pos")
        vel = _vec3(self.vel, "vel")
        if not np.linalg.norm(pos) > 0:
            raise DomainError("inertial position must be nonzero")
        if not self.mass > 0:
            raise DomainError("mass must be positive")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "vel", vel)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def with_vector(self, x) -> "InertialState":
        x = np.asarray(x, dtype=float)
        return InertialState(x[:3], x[3:6], self.mass)


@lru_cache(maxsize=64)
def cw_matrices(n: float) -> tuple[np.ndarray, np.ndarray]:
    """Position (``A``) and velocity (``B``) coupling matrices of the CW model (read-only)."""
    A = np.array([[3.0 * n * n, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -n * n]])
    B = np.array([[0.0, 2.0 * n, 0.0], [-2.0 * n, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def cw_accel(pos, vel, thrust, n: float, mass: float) -> np.ndarray:
    """Model relative acceleration ``A pos + B vel + thrust / mass``.

    Works on single 3-vectors or on stacked ``(..., 3)`` arrays.
    """
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    thrust = np.asarray(thrust, dtype=float)
    acc = np.empty(np.broadcast_shapes(pos.shape, vel.shape, thrust.shape))
    acc[..., 0] = 3.0 * n * n * pos[..., 0] + 2.0 * n * vel[..., 1]
    acc[..., 1] = -2.0 * n * vel[..., 0]
    acc[..., 2] = -n * n * pos[..., 2]
    return acc + thrust / mass


def cw_derivative(state: RelativeState, thrust, n: float, mass: float) -> np.ndarray:
    """Time derivative ``(vel, accel)`` of a relative state under CW dynamics."""
    if not mass > 0:
        raise DomainError("mass must be positive")
    thrust = _vec3(thrust, "thrust")
    return np.concatenate([state.vel, cw_accel(state.pos, state.vel, thrust, n, mass)])


def cw_vector_field(n: float, mass: float, thrust=None) -> Callable[[np.ndarray], np.ndarray]:
    """Autonomous CW vector field on stacked ``(..., 6)`` state arrays with constant thrust."""
    u = np.zeros(3) if thrust is None else np.asarray(thrust, dtype=float)

    def f(x: np.ndarray) -> np.ndarray:
        pos, vel = x[..., :3], x[..., 3:]
        return np.concatenate([vel, cw_accel(pos, vel, u, n, mass)], axis=-1)

    return f


def rk4_step(derivative_fn: Callable[[np.ndarray], np.ndarray], state, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``x' = derivative_fn(x)``.

    ``state`` may be a scalar or an array of any shape that ``derivative_fn``
    accepts. Raises :class:`IntegrationError` if any stage is non-finite.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(derivative_fn(x), dtype=float)
    k2 = np.asarray(derivative_fn(x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(derivative_fn(x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(derivative_fn(x + dt * k3), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    for stage in (k1, k2, k3, k4, out):
        if not np.all(np.isfinite(stage)):
            raise IntegrationError("non-finite value encountered during RK4 step")
    return out


@lru_cache(maxsize=64)
def cw_rk4_matrices(n: float, dt: float, mass: float) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step of the CW model written as ``x1 = Phi @ x0 + Gam @ thrust``.

    For a linear system with constant input, the four RK4 stages collapse to
    the fourth-order Taylor polynomial of the system matrix, so this is the
    same update as :func:`rk4_step` on :func:`cw_vector_field`, without the
    per-stage overhead.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not mass > 0:
        raise DomainError("mass must be positive")
    A, B = cw_matrices(n)
    M = np.zeros((6, 6))
    M[:3, 3:] = np.eye(3)
    M[3:, :3] = A
    M[3:, 3:] = B
    hM = dt * M
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    eye = np.eye(6)
    phi = eye + hM + hM2 / 2.0 + hM3 / 6.0 + hM3 @ hM / 24.0
    gam = dt * (eye + hM / 2.0 + hM2 / 6.0 + hM3 / 24.0)[:, 3:] / mass
    phi.setflags(write=False)
    gam.setflags(write=False)
    return phi, gam


def cw_propagate(x, thrust, n: float, mass: float, dt: float) -> np.ndarray:
    """RK4 step of stacked ``(..., 6)`` CW states under stacked ``(..., 3)`` thrusts."""
    phi, gam = cw_rk4_matrices(float(n), float(dt), float(mass))
    out = np.asarray(x, dtype=float) @ phi.T + np.asarray(thrust, dtype=float) @ gam.T
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite value encountered during RK4 step")
    return out


def cw_step(state: RelativeState, thrust, n: float, mass: float, dt: float) -> RelativeState:
    """Advance one relative state by ``dt`` with zero-order-hold thrust."""
    x = cw_propagate(state.as_vector(), _vec3(thrust, "thrust"), n, mass, dt)
    return RelativeState(x[:3], x[3:])


def cw_stm(n: float, t: float) -> np.ndarray:
    """Analytic 6x6 state transition matrix of the unforced CW equations."""
    c, s = np.cos(n * t), np.sin(n * t)
    return np.array([
        [4 - 3 * c, 0, 0, s / n, 2 * (1 - c) / n, 0],
        [6 * (s - n * t), 1, 0, -2 * (1 - c) / n, (4 * s - 3 * n * t) / n, 0],
        [0, 0, c, 0, 0, s / n],
        [3 * n * s, 0, 0, c, 2 * s, 0],
        [-6 * n * (1 - c), 0, 0, -2 * s, 4 * c - 3, 0],
        [0, 0, -n * s, 0, 0, c],
    ])


def cw_closed_form(state0: RelativeState, n: float, t: float) -> RelativeState:
    """Exact unforced CW solution at time ``t``; used to check the integrator."""
    if t < 0:
        raise DomainError("t must be non-negative")
    return RelativeState.from_vector(cw_stm(n, t) @ state0.as_vector())


def j2_perturbation_accel(pos, params: OrbitParams) -> np.ndarray:
    """Acceleration from Earth's J2 oblateness term at ECI position(s) ``pos``.

    Uses the standard scale ``1.5 J2 mu R_E^2 / r^5`` on the bracketed
    position factors. Accepts a 3-vector or a stacked ``(..., 3)`` array.
    """
    pos = np.asarray(pos, dtype=float)
    r = np.linalg.norm(pos, axis=-1, keepdims=True)
    if np.any(r <= 0):
        raise DomainError("zero radius")
    zr2 = (pos[..., 2:3] / r) ** 2
    k = -1.5 * params.j2 * params.mu * params.earth_radius**2 / r**5
    fac = np.concatenate([1 - 5 * zr2, 1 - 5 * zr2, 3 - 5 * zr2], axis=-1)
    return k * pos * fac


def two_body_j2_accel(state: InertialState, external_force, params: OrbitParams,
                      j2_enabled: bool = True) -> np.ndarray:
    """Inertial acceleration: point-mass gravity, optional J2, plus ``external_force / mass``."""
    pos = state.pos
    r = np.linalg.norm(pos)
    if not r > 0:
        raise DomainError("zero radius")
    acc = -params.mu / r**3 * pos + _vec3(external_force, "external_force") / state.mass
    if j2_enabled:
        acc = acc + j2_perturbation_accel(pos, params)
    return acc


def inertial_vector_field(params: OrbitParams, masses, forces, j2_enabled: bool = True):
    """Vector field over stacked ``(k, 6)`` ECI states with constant per-body forces."""
    masses = np.asarray(masses, dtype=float).reshape(-1, 1)
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    f_over_m = forces / masses

    def f(x: np.ndarray) -> np.ndarray:
        pos, vel = x[:, :3], x[:, 3:]
        r = np.linalg.norm(pos, axis=1, keepdims=True)
        if np.any(r <= 0):
            raise DomainError("zero radius")
        acc = -params.mu / r**3 * pos + f_over_m
        if j2_enabled:
            acc = acc + j2_perturbation_accel(pos, params)
        return np.concatenate([vel, acc], axis=1)

    return f


def propagate_inertial(states: list[InertialState], forces, params: OrbitParams, dt: float,
                       j2_enabled: bool = True) -> list[InertialState]:
    """Advance several ECI bodies one RK4 step with zero-order-hold external forces."""
    x = np.stack([s.as_vector() for s in states])
    f = inertial_vector_field(params, [s.mass for s in states], forces, j2_enabled)
    x1 = rk4_step(f, x, dt)
    return [s.with_vector(row) for s, row in zip(states, x1)]


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries heavy per-call overhead for single 3-vectors.
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def hill_rotation(chief: InertialState, radial_outward: bool = False) -> np.ndarray:
    """Rotation ``R_E/H`` whose columns are the Hill axes resolved in ECI.

    By default the first axis points from the chief toward Earth's center.
    Set ``radial_outward`` for the conventional outward radial axis. In both
    cases the third axis is along the chief's orbital angular momentum.
    """
    r, v = chief.pos, chief.vel
    h = _cross(r, v)
    h_norm = np.linalg.norm(h)
    r_norm = np.linalg.norm(r)
    if not (r_norm > 0 and h_norm > 1e-12 * r_norm * max(np.linalg.norm(v), 1e-300)):
        raise FrameError("degenerate chief state: zero angular momentum")
    i_hat = r / r_norm
    if not radial_outward:
        i_hat = -i_hat
    k_hat = h / h_norm
    j_hat = _cross(k_hat, i_hat)
    return np.column_stack([i_hat, j_hat, k_hat])


def _frame_rate(chief: InertialState) -> np.ndarray:
    r = chief.pos
    return _cross(r, chief.vel) / np.dot(r, r)


def to_hill(deputy: InertialState, chief: InertialState,
            radial_outward: bool = False) -> RelativeState:
    """Express a deputy's ECI state relative to the chief in Hill's frame."""
    R = hill_rotation(chief, radial_outward)
    dr = deputy.pos - chief.pos
    dv = deputy.vel - chief.vel - _cross(_frame_rate(chief), dr)
    return RelativeState(R.T @ dr, R.T @ dv)


def from_hill(rel: RelativeState, chief: InertialState, mass: float = 1.0,
              radial_outward: bool = False) -> InertialState:
    """Inverse of :func:`to_hill`."""
    R = hill_rotation(chief, radial_outward)
    dr = R @ rel.pos
    dv = R @ rel.vel + _cross(_frame_rate(chief), dr)
    return InertialState(chief.pos + dr, chief.vel + dv, mass)


def circular_chief(params: OrbitParams, j2_enabled: bool = True, mass: float = 1.0) -> InertialState:
    """Chief on an equatorial orbit of radius ``r0_mag``.

    With J2 enabled the speed includes the equatorial J2 correction so the
    orbit stays circular.
    """
    r = params.r0_mag
    v2 = params.mu / r
    if j2_enabled:
        v2 *= 1.0 + 1.5 * params.j2 * (params.earth_radius / r) ** 2
    return InertialState(np.array([r, 0.0, 0.0]), np.array([0.0, np.sqrt(v2), 0.0]), mass)


def specific_energy(state: InertialState, mu: float) -> float:
    return 0.5 * float(state.vel @ state.vel) - mu / float(np.linalg.norm(state.pos))


def angular_momentum(state: InertialState) -> float:
    return float(np.linalg.norm(_cross(state.pos, state.vel)))
