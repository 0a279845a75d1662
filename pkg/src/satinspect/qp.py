"""Dense solver for the slack-relaxed safety QP.

Problem::

    minimize    ||u - a||^2 + gamma3 * ||phi||^2
    subject to  coeff_r . u + offset_r >= phi[slack_r]     for every row r

with ``u`` in R^3 and the slacks free in sign. The problem is solved in the
joint variable ``z = (u, phi)`` with a primal active-set method. Starting
from ``u = a`` and ``phi_s = min(0, min_{r in s} g_r(a))`` (always
feasible, ``g_r(u) = coeff_r . u + offset_r``), each iteration solves the
equality-constrained subproblem on the working set, then either steps
toward its minimizer up to the first blocking row or, at a subproblem
minimizer, drops the row with the most negative multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KKT_TOL = 1e-6


@dataclass(frozen=True)
class QpSolution:
    u_star: np.ndarray
    phi_star: np.ndarray
    kkt_residual: float
    active_set: tuple[int, ...]
    status: str  # "optimal" or "max_iter"
    multipliers: np.ndarray
    objective: float
    iterations: int


class QpData:
    """Stacked row data with the slack grouping precomputed."""

    def __init__(self, nominal, coeffs, offsets, slack_ids, gamma3: float):
        self.a = np.asarray(nominal, dtype=float).reshape(3)
        self.C = np.asarray(coeffs, dtype=float).reshape(-1, 3)
        self.o = np.asarray(offsets, dtype=float).reshape(-1)
        self.sid = np.asarray(slack_ids, dtype=int).reshape(-1)
        if not gamma3 > 0:
            raise ValueError("gamma3 must be positive")
        if self.C.shape[0] != self.o.size or self.o.size != self.sid.size:
            raise ValueError("coeffs, offsets and slack_ids must have matching lengths")
        if not (np.all(np.isfinite(self.C)) and np.all(np.isfinite(self.o))
                and np.all(np.isfinite(self.a))):
            raise ValueError("QP data must be finite")
        if self.sid.size and self.sid.min() < 0:
            raise ValueError("slack ids must be non-negative")
        self.gamma3 = float(gamma3)
        self.n_slacks = int(self.sid.max()) + 1 if self.sid.size else 0

    def rows(self, u):
        return self.C @ u + self.o

    def binding(self, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per slack group: the minimizing row (lowest index on ties) and the optimal slack."""
        arg = np.full(self.n_slacks, -1, dtype=int)
        best = np.zeros(self.n_slacks)
        for r in range(g.size):
            s = self.sid[r]
            if arg[s] < 0 or g[r] < best[s]:
                arg[s] = r
                best[s] = g[r]
        return arg, np.minimum(0.0, best)

    def violated(self, g: np.ndarray) -> np.ndarray:
        arg, phi = self.binding(g)
        return np.sort(arg[phi < 0.0])

    def objective(self, u) -> float:
        _, phi = self.binding(self.rows(u))
        d = u - self.a
        return float(d @ d + self.gamma3 * (phi @ phi))


def kkt_residual(data: QpData, u, phi, lam) -> float:
    """Largest of the stationarity, primal, dual-sign and complementarity violations."""
    g = data.rows(u) - phi[data.sid]
    stat_u = 2.0 * (u - data.a) - data.C.T @ lam
    stat_phi = 2.0 * data.gamma3 * phi + np.bincount(data.sid, weights=lam,
                                                     minlength=data.n_slacks)
    parts = (
        np.abs(stat_u),
        np.abs(stat_phi),
        np.maximum(0.0, -g),
        np.maximum(0.0, -lam),
        np.abs(lam * g),
    )
    return float(max(np.max(p, initial=0.0) for p in parts))


def _initial_point(data: QpData) -> tuple[np.ndarray, list[int]]:
    arg, phi = data.binding(data.rows(data.a))
    work = [int(arg[k]) for k in range(data.n_slacks) if phi[k] < 0.0]
    return np.concatenate([data.a, phi]), sorted(work)


def solve(nominal, coeffs, offsets, slack_ids, gamma3: float, max_iter: int = 100) -> QpSolution:
    """Solve the relaxed QP over stacked rows.

    Args:
        nominal: desired control ``a``, shape (3,).
        coeffs: row coefficients, shape (m, 3).
        offsets: row offsets, shape (m,).
        slack_ids: slack group of each row, shape (m,).
        gamma3: slack penalty weight.
        max_iter: iteration cap; hitting it returns the current feasible
            iterate with status ``"max_iter"``.
    """
    data = QpData(nominal, coeffs, offsets, slack_ids, gamma3)
    m, S = data.o.size, data.n_slacks
    nz = 3 + S
    G = np.zeros((m, nz))
    G[:, :3] = data.C
    G[np.arange(m), 3 + data.sid] = -1.0
    h = -data.o
    H = 2.0 * np.diag(np.concatenate([np.ones(3), np.full(S, data.gamma3)]))
    z0 = np.concatenate([data.a, np.zeros(S)])

    z, work = _initial_point(data)
    lam_w = np.zeros(0)
    at_minimizer = False  # z solves the subproblem on the current working set
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        k = len(work)
        A = G[work]
        K = np.zeros((nz + k, nz + k))
        K[:nz, :nz] = H
        K[:nz, nz:] = -A.T
        K[nz:, :nz] = A
        rhs = np.concatenate([-H @ (z - z0), np.zeros(k)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p, lam_w = sol[:nz], sol[nz:]
        if at_minimizer or np.linalg.norm(p) <= 1e-12 * (1.0 + np.linalg.norm(z)):
            at_minimizer = False
            if k == 0 or lam_w.min() >= 0.0:
                status = "optimal"
                break
            work.pop(int(np.argmin(lam_w)))
            continue
        alpha, block = 1.0, None
        slope = G @ p
        for r in range(m):
            if r in work or slope[r] >= 0.0:
                continue
            step = (h[r] - G[r] @ z) / slope[r]
            if step < alpha:
                alpha, block = max(step, 0.0), r
        z = z + alpha * p
        if block is None:
            at_minimizer = True
        else:
            work = sorted(work + [block])

    u, phi = z[:3], z[3:]
    lam = np.zeros(m)
    lam[work] = np.maximum(lam_w, 0.0) if len(lam_w) == len(work) else 0.0
    res = kkt_residual(data, u, phi, lam)
    if status == "optimal" and res >= KKT_TOL:
        status = "max_iter"
    g = data.rows(u)
    active = tuple(int(r) for r in np.flatnonzero(g - phi[data.sid] < 1e-9))
    d = u - data.a
    objective = float(d @ d + data.gamma3 * (phi @ phi))
    return QpSolution(u, phi, res, active, status, lam, objective, it)
