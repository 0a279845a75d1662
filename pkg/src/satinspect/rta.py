"""Runtime-assurance safety filter.

Each safety requirement is a barrier function of the Hill-frame state.
Differentiating along the CW model until the thrust appears turns every
requirement into an affine inequality ``coeff . u + offset >= phi`` in the
deputy's own thrust ``u``; the relaxed QP in :mod:`satinspect.qp` then finds
the thrust closest to the nominal command.

Barriers used:

* inter-agent and chief separation, ``h = (|dr|^2 - r_c^2) / 2`` with the
  second-order condition ``h'' + (g1 + g0) h' + g1 g0 h >= phi``;
* speed, ``b = (v_c^2 - |v|^2) / 2`` with ``b' + g2 b >= phi``;
* acceleration, ``a_c^2 - meas . (A dr + B v + u/m) >= phi`` using the
  measured acceleration;
* per-axis thrust, ``u_c - |u_k| >= phi`` split into two rows per axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qp
from .dynamics import RelativeState, cw_accel

ACTIVE_TOL = 1e-9

KINDS = ("position", "velocity", "acceleration", "thrust")


@dataclass(frozen=True)
class RtaParams:
    """Safety limits and barrier gains. Limits default to the reference inspection setup."""

    r_c: float = 50.0
    v_c: float = 3.0
    a_c: float = 1.732
    u_c: np.ndarray = field(default_factory=lambda: np.ones(3))
    gamma0: float = 0.1
    gamma1: float = 0.1
    gamma2: float = 0.5
    gamma3: float = 1e3
    mass: float = 1.0

    def __post_init__(self):
        u_c = np.broadcast_to(np.asarray(self.u_c, dtype=float), (3,)).copy()
        object.__setattr__(self, "u_c", u_c)
        scalars = (self.r_c, self.v_c, self.a_c, self.gamma0, self.gamma1,
                   self.gamma2, self.gamma3, self.mass)
        if not all(np.isfinite(x) and x > 0 for x in scalars) or not np.all(u_c > 0):
            raise ValueError("RTA parameters must all be strictly positive")


@dataclass(frozen=True)
class ConstraintRow:
    """Affine constraint ``coeff . u + offset >= phi[slack_id]``.

    ``kind`` is one of :data:`KINDS`; ``label`` identifies the row within its
    kind (other agent id, or ``(axis, sign)`` for thrust rows).
    """

    coeff: np.ndarray
    offset: float
    slack_id: int
    kind: str
    label: object = None

    def value(self, u) -> float:
        return float(self.coeff @ np.asarray(u, dtype=float) + self.offset)


def position_barrier(dr: np.ndarray, r_c: float) -> float:
    return 0.5 * (float(dr @ dr) - r_c * r_c)


def velocity_barrier(vel: np.ndarray, v_c: float) -> float:
    return 0.5 * (v_c * v_c - float(vel @ vel))


def position_constraint_row(self_state: RelativeState, other: RelativeState, other_accel,
                            params: RtaParams, n: float, slack_id: int = 0,
                            label: object = None) -> ConstraintRow:
    """Second-order separation constraint between this deputy and ``other``.

    Pass ``RelativeState.zero()`` and a zero acceleration for the chief.
    """
    dr = self_state.pos - other.pos
    dv = self_state.vel - other.vel
    drift = cw_accel(self_state.pos, self_state.vel, np.zeros(3), n, params.mass)
    h = position_barrier(dr, params.r_c)
    h_dot = float(dr @ dv)
    offset = (float(dv @ dv) + float(dr @ (drift - np.asarray(other_accel, dtype=float)))
              + (params.gamma0 + params.gamma1) * h_dot + params.gamma0 * params.gamma1 * h)
    return ConstraintRow(dr / params.mass, offset, slack_id, "position", label)


def velocity_constraint_row(state: RelativeState, params: RtaParams, n: float,
                            slack_id: int = 0) -> ConstraintRow:
    """First-order speed-limit constraint."""
    v = state.vel
    drift = cw_accel(state.pos, v, np.zeros(3), n, params.mass)
    offset = -float(v @ drift) + params.gamma2 * velocity_barrier(v, params.v_c)
    return ConstraintRow(-v / params.mass, offset, slack_id, "velocity")


def accel_and_thrust_rows(state: RelativeState, measured_accel, params: RtaParams, n: float,
                          accel_slack: int = 0, thrust_slack: int = 1) -> list[ConstraintRow]:
    """Acceleration row plus six thrust rows (one slack per axis, shared by both signs).

    Thrust slacks use ids ``thrust_slack``, ``thrust_slack + 1``, ``thrust_slack + 2``.
    """
    meas = np.asarray(measured_accel, dtype=float)
    drift = cw_accel(state.pos, state.vel, np.zeros(3), n, params.mass)
    rows = [ConstraintRow(-meas / params.mass, params.a_c**2 - float(meas @ drift),
                          accel_slack, "acceleration")]
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        rows.append(ConstraintRow(-e, float(params.u_c[k]), thrust_slack + k, "thrust", (k, +1)))
        rows.append(ConstraintRow(e.copy(), float(params.u_c[k]), thrust_slack + k, "thrust", (k, -1)))
    return rows


def solve_relaxed_qp(nominal, rows: Sequence[ConstraintRow], params: RtaParams,
                     max_iter: int = 100) -> qp.QpSolution:
    """Thrust closest to ``nominal`` satisfying the slack-relaxed rows.

    Slack ids are taken from the rows; slack groups with no rows are
    reported with a zero slack.
    """
    if rows:
        C = np.stack([r.coeff for r in rows])
        o = np.array([r.offset for r in rows])
        sid = np.array([r.slack_id for r in rows])
    else:
        C, o, sid = np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int)
    return qp.solve(nominal, C, o, sid, params.gamma3, max_iter=max_iter)


@dataclass(frozen=True)
class WorldSnapshot:
    """States and last measured accelerations of every deputy, indexed by agent id."""

    states: Sequence[RelativeState]
    accels: Sequence[np.ndarray]


@dataclass(frozen=True)
class RtaReport:
    active: dict  # kind -> bool
    slack_norm: float
    slacks: np.ndarray
    residuals: np.ndarray
    rows: tuple
    status: str
    kkt_residual: float
    intervened: bool

    @property
    def any_active(self) -> bool:
        return any(self.active.values())


def assemble_rows(agent_id: int, world: WorldSnapshot, params: RtaParams,
                  n: float) -> list[ConstraintRow]:
    """All rows for one deputy: other deputies, chief, speed, acceleration, thrust."""
    me = world.states[agent_id]
    rows = []
    slack = 0
    for j, other in enumerate(world.states):
        if j == agent_id:
            continue
        rows.append(position_constraint_row(me, other, world.accels[j], params, n, slack, j))
        slack += 1
    rows.append(position_constraint_row(me, RelativeState.zero(), np.zeros(3), params, n,
                                        slack, "chief"))
    slack += 1
    rows.append(velocity_constraint_row(me, params, n, slack))
    slack += 1
    rows.extend(accel_and_thrust_rows(me, world.accels[agent_id], params, n,
                                      accel_slack=slack, thrust_slack=slack + 1))
    return rows


def rta_filter(agent_id: int, nominal, world: WorldSnapshot, params: RtaParams,
               n: float) -> tuple[np.ndarray, RtaReport]:
    """Filter one deputy's nominal thrust; returns the safe thrust and an activation report."""
    nominal = np.asarray(nominal, dtype=float)
    rows = assemble_rows(agent_id, world, params, n)
    sol = solve_relaxed_qp(nominal, rows, params)
    phi = sol.phi_star
    residuals = np.array([r.value(sol.u_star) - phi[r.slack_id] for r in rows])
    active = {k: False for k in KINDS}
    for r, res in zip(rows, residuals):
        if res < ACTIVE_TOL:
            active[r.kind] = True
    report = RtaReport(
        active=active,
        slack_norm=float(np.linalg.norm(phi)),
        slacks=phi,
        residuals=residuals,
        rows=tuple(rows),
        status=sol.status,
        kkt_residual=sol.kkt_residual,
        intervened=not np.array_equal(sol.u_star, nominal),
    )
    return sol.u_star, report
