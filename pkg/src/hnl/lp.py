"""Linear programming: a bounded-variable revised simplex and a HiGHS bridge.

Problems are stated as

    min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub

with infinite bounds allowed.  The simplex works on the equality form with
one slack per inequality row and runs a phase-one on artificial variables.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = ["LPProblem", "LPSolution", "solve_lp", "simplex", "FEAS_TOL"]

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class LPProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    constant: float = 0.0
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "A_ub")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "A_eq")
        self.lb = np.zeros(n) if self.lb is None else np.broadcast_to(
            np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(
            np.asarray(self.ub, dtype=float), (n,)).copy()
        data = [self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq]
        if not all(np.all(np.isfinite(a)) for a in data):
            raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("LP bounds must not be NaN")

    @property
    def n(self) -> int:
        return self.c.size

    def objective(self, x) -> float:
        return float(self.c @ x + self.constant)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = [0.0, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0))]
        if self.A_ub.shape[0]:
            v.append(float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.A_eq.shape[0]:
            v.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return max(v)


def _rows(A, b, n, name):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{name} has shape {A.shape}, expected (*, {n}) with {b.size} rows")
    return A, b


@dataclass
class LPSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    backend: str = "simplex"
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class _Simplex:
    """Bounded-variable revised simplex on ``A x = b, l <= x <= u``."""

    def __init__(self, A, b, l, u, max_iter):
        self.A, self.b, self.l, self.u = A, b, l, u
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.iterations = 0

    def _nonbasic_values(self):
        st = self.status
        return np.where(st == _LOWER, self.l, np.where(st == _UPPER, self.u, 0.0))

    def _factor(self):
        self.lu = lu_factor(self.A[:, self.basis])
        self.etas = []

    def _ftran(self, v):
        """``B^-1 v`` through the last factorisation and the eta file."""
        x = lu_solve(self.lu, v)
        for p, col in self.etas:
            xp = x[p] / col[p]
            x -= col * xp
            x[p] = xp
        return x

    def _btran(self, v):
        """``B^-T v``."""
        z = np.array(v, dtype=float)
        for p, col in reversed(self.etas):
            z[p] = (z[p] - (col @ z - col[p] * z[p])) / col[p]
        return lu_solve(self.lu, z, trans=1)

    def _refresh(self):
        self._factor()
        x = self._nonbasic_values()
        x[self.basis] = 0.0
        x[self.basis] = self._ftran(self.b - self.A @ x)
        self.x = x

    def run(self, c, basis, status) -> str:
        self.basis = np.array(basis, dtype=int)
        self.status = np.array(status, dtype=int)
        self._refresh()
        movable = self.l != self.u
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            y = self._btran(c[self.basis])
            d = c - self.A.T @ y
            st = self.status
            up = (st != _BASIC) & (st != _UPPER) & (d < -OPT_TOL) & movable
            down = (st != _BASIC) & (st != _LOWER) & (d > OPT_TOL) & movable
            eligible = up | down
            if not eligible.any():
                self._refresh()
                return "optimal"
            if degenerate > 50:
                entering = int(np.flatnonzero(eligible)[0])
            else:
                entering = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = 1 if up[entering] else -1
            self.iterations += 1
            col = self._ftran(self.A[:, entering])
            # basic values move by -direction * t * col while the entering variable moves by direction * t
            rate = -direction * col
            xB = self.x[self.basis]
            lB, uB = self.l[self.basis], self.u[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where((rate < -PIVOT_TOL) & np.isfinite(lB), (xB - lB) / -rate, np.inf)
                t_inc = np.where((rate > PIVOT_TOL) & np.isfinite(uB), (uB - xB) / rate, np.inf)
            t_row = np.maximum(np.minimum(t_dec, t_inc), 0.0)
            t_flip = self.u[entering] - self.l[entering]
            t_best = t_row.min() if self.m else np.inf
            if t_flip <= t_best + 1e-12 and np.isfinite(t_flip):
                t_max, leave_pos = t_flip, -1
            else:
                t_max = t_best
                if not np.isfinite(t_max):
                    return "unbounded"
                ties = np.flatnonzero(t_row <= t_max + 1e-12)
                leave_pos = int(ties[np.argmin(self.basis[ties])])
            degenerate = degenerate + 1 if t_max <= FEAS_TOL else 0
            self.x[self.basis] = xB + rate * t_max
            self.x[entering] += direction * t_max
            if leave_pos < 0:
                self.status[entering] = _UPPER if direction > 0 else _LOWER
                self.x[entering] = self.u[entering] if direction > 0 else self.l[entering]
                continue
            leaving = int(self.basis[leave_pos])
            to_lower = t_dec[leave_pos] <= t_inc[leave_pos]
            self.status[leaving] = _LOWER if to_lower else _UPPER
            self.x[leaving] = self.l[leaving] if to_lower else self.u[leaving]
            self.basis[leave_pos] = entering
            self.status[entering] = _BASIC
            if len(self.etas) >= 64:
                self._factor()
            else:
                self.etas.append((leave_pos, col))


def simplex(problem: LPProblem, max_iter: int = 50_000) -> LPSolution:
    """Two-phase bounded revised simplex; Dantzig pricing with a Bland fallback
    after 50 consecutive degenerate pivots."""
    P = problem
    n0 = P.n
    m_ub, m_eq = P.A_ub.shape[0], P.A_eq.shape[0]
    m = m_ub + m_eq
    A = np.zeros((m, n0 + m_ub))
    A[:m_ub, :n0] = P.A_ub
    A[:m_ub, n0:] = np.eye(m_ub)
    A[m_ub:, :n0] = P.A_eq
    b = np.concatenate([P.b_ub, P.b_eq])
    l = np.concatenate([P.lb, np.zeros(m_ub)])
    u = np.concatenate([P.ub, np.full(m_ub, np.inf)])
    if np.any(l > u + FEAS_TOL):
        return LPSolution("infeasible", message="a lower bound exceeds its upper bound")
    if m == 0:
        x = np.where(P.c > 0, P.lb, np.where(P.c < 0, P.ub, np.where(np.isfinite(P.lb), P.lb,
                                                                          np.where(np.isfinite(P.ub), P.ub, 0.0))))
        if not np.all(np.isfinite(x)):
            return LPSolution("unbounded", message="objective decreases along a free direction")
        return LPSolution("optimal", x, P.objective(x))
    n = A.shape[1]
    status = []
    xN = np.zeros(n)
    for j in range(n):
        if np.isfinite(l[j]):
            status.append(_LOWER)
            xN[j] = l[j]
        elif np.isfinite(u[j]):
            status.append(_UPPER)
            xN[j] = u[j]
        else:
            status.append(_FREE)
    r = b - A @ xN
    sign = np.where(r >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(sign)])
    l1 = np.concatenate([l, np.zeros(m)])
    u1 = np.concatenate([u, np.full(m, np.inf)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    status1 = np.array(status + [_BASIC] * m)
    # inequality rows already satisfied start with their slack in the basis
    for i in np.flatnonzero(r[:m_ub] >= 0):
        basis[i] = n0 + i
        status1[n0 + i] = _BASIC
        status1[n + i] = _LOWER
    solver = _Simplex(A1, b, l1, u1, max_iter)
    st = solver.run(c1, basis, status1)
    if st == "iteration_limit":
        return LPSolution(st, iterations=solver.iterations, message="phase one hit the iteration limit")
    infeas = float(np.sum(solver.x[n:]))
    if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LPSolution("infeasible", iterations=solver.iterations,
                          message=f"phase one residual {infeas:.3e}", extra={"residual": infeas})
    # phase two: artificials pinned at zero, possibly still basic
    solver.u = np.concatenate([u, np.zeros(m)])
    c2 = np.concatenate([np.concatenate([P.c, np.zeros(m_ub)]), np.zeros(m)])
    status2 = solver.status.copy()
    art = np.arange(n, n + m)
    status2[art[status2[art] != _BASIC]] = _LOWER
    st = solver.run(c2, solver.basis, status2)
    x = solver.x[:n0].copy()
    if st != "optimal":
        return LPSolution(st, iterations=solver.iterations)
    viol = P.max_violation(x)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if viol > 1e-7 * scale:
        log.warning("simplex solution violates constraints by %.3e", viol)
    return LPSolution("optimal", x, P.objective(x), solver.iterations,
                      extra={"max_violation": viol})


def _highs(problem: LPProblem) -> LPSolution:
    from scipy.optimize import linprog

    P = problem
    res = linprog(P.c, A_ub=P.A_ub if P.A_ub.size else None, b_ub=P.b_ub if P.A_ub.size else None,
                  A_eq=P.A_eq if P.A_eq.size else None, b_eq=P.b_eq if P.A_eq.size else None,
                  bounds=list(zip(np.where(np.isfinite(P.lb), P.lb, None),
                                  np.where(np.isfinite(P.ub), P.ub, None))),
                  method="highs", options={"primal_feasibility_tolerance": FEAS_TOL,
                                           "dual_feasibility_tolerance": OPT_TOL})
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    if status != "optimal":
        return LPSolution(status, backend="highs", message=res.message)
    x = np.asarray(res.x, dtype=float)
    return LPSolution("optimal", x, P.objective(x), int(getattr(res, "nit", 0)), "highs",
                      extra={"max_violation": P.max_violation(x)})


def solve_lp(problem: LPProblem, backend: str = "simplex", **kw) -> LPSolution:
    """Solve ``problem`` with the in-repo simplex or with HiGHS (``backend="highs"``)."""
    if backend == "simplex":
        return simplex(problem, **kw)
    if backend == "highs":
        return _highs(problem)
    raise ValueError(f"unknown LP backend {backend!r}")
