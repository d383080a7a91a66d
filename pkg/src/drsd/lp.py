"""Dense revised simplex LP kernel.

Problems are stated as::

    min  c'x
    s.t. A x (<=, =, >=) b
         lower <= x <= upper

and solved by a two-phase revised simplex with an explicit basis inverse.
Dual multipliers follow the usual sign convention for a minimization
problem: rows with ``>=`` get multipliers >= 0, rows with ``<=`` get
multipliers <= 0, and equality rows are free, so that ``c - A'y`` are the
reduced costs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class LpError(RuntimeError):
    """Raised by callers that require an optimal LP and did not get one."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


@dataclass
class LpSettings:
    feasibility_tol: float = 1e-8
    duality_gap_tol: float = 1e-7
    pivot_tol: float = 1e-9
    optimality_tol: float = 1e-9
    refactor_every: int = 50
    # "auto" solves the LP dual when rows greatly outnumber columns
    method: str = "auto"


DEFAULT_SETTINGS = LpSettings()


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = tuple(self.senses)
        m = self.A.shape[0]
        if self.lower is None:
            self.lower = np.zeros(n)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.b.size != m or len(self.senses) != m:
            raise ValueError(f"row count mismatch: A has {m} rows, b {self.b.size}, senses {len(self.senses)}")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must match the number of columns")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("right-hand side must be finite")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray = None
    objective: float = float("nan")
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def solve_lp(problem: LpProblem, settings: LpSettings = None) -> LpSolution:
    """Solve ``problem`` and return primal and dual solutions."""
    settings = settings or DEFAULT_SETTINGS
    m, n = problem.shape
    method = settings.method
    if method == "auto":
        method = "dual" if m > 2 * n + 4 else "primal"
    if method == "dual":
        sol = _solve_via_dual(problem, settings)
        if sol.optimal:
            return sol
        # dual-side status does not separate infeasible from unbounded
    return _solve_primal(problem, settings)


# ---------------------------------------------------------------------------
# primal route


def _solve_primal(problem, settings):
    m, n = problem.shape
    lo, up = problem.lower, problem.upper
    if np.any(lo > up):
        return LpSolution(Status.INFEASIBLE)

    # x = offset + M @ z with z >= 0
    fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
    free = ~fin_lo & ~fin_up
    offset = np.where(fin_lo, lo, np.where(fin_up, up, 0.0))
    sign = np.where(fin_lo | free, 1.0, -1.0)
    free_idx = np.flatnonzero(free)
    nz = n + free_idx.size
    M = np.zeros((n, nz))
    M[np.arange(n), np.arange(n)] = sign
    M[free_idx, n + np.arange(free_idx.size)] = -1.0
    boxed = np.flatnonzero(fin_lo & fin_up)
    nb = boxed.size
    rows = m + nb

    # slack columns, then flip rows to get rhs >= 0
    senses = np.array(problem.senses + (LE,) * nb)
    has_slack = senses != EQ
    n_slack = int(has_slack.sum())
    A_std = np.zeros((rows, nz + n_slack))
    A_std[:m, :nz] = problem.A @ M
    A_std[m + np.arange(nb), boxed] = 1.0
    rhs = np.empty(rows)
    rhs[:m] = problem.b - problem.A @ offset
    rhs[m:] = up[boxed] - lo[boxed]
    slack_rows = np.flatnonzero(has_slack)
    slack_of_row = np.full(rows, -1)
    slack_of_row[slack_rows] = nz + np.arange(n_slack)
    A_std[slack_rows, slack_of_row[slack_rows]] = np.where(senses[slack_rows] == LE, 1.0, -1.0)
    flip = rhs < 0
    A_std[flip] *= -1.0
    rhs = np.where(flip, -rhs, rhs)
    c_std = np.concatenate([M.T @ problem.c, np.zeros(n_slack)])

    core = _TwoPhase(A_std, rhs, c_std, slack_of_row, settings)
    status = core.run()
    info = {"pivots": core.pivots, "bland": core.bland}
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=core.pivots, info=info)

    z_full = core.primal()
    z = z_full[:nz]
    x = offset + M @ z
    y_std = core.duals()
    y_std = np.where(flip, -y_std, y_std)
    y = y_std[:m]
    reduced = problem.c - problem.A.T @ y
    objective = float(problem.c @ x)
    return LpSolution(Status.OPTIMAL, x=x, objective=objective, duals=y,
                      reduced_costs=reduced, iterations=core.pivots, info=info)


class _TwoPhase:
    """Revised simplex on ``A z = b, z >= 0`` with ``b >= 0``."""

    def __init__(self, A, b, c, slack_of_row, settings):
        self.A = A
        self.b = b
        self.c = c
        self.settings = settings
        self.m, self.n = A.shape
        self.pivots = 0
        self.bland = False
        rows = np.arange(self.m)
        usable = slack_of_row >= 0
        usable[usable] = A[rows[usable], slack_of_row[usable]] > 0
        basis = np.where(usable, slack_of_row, -1)
        need = np.flatnonzero(~usable)
        self.n_art = n_art = need.size
        if n_art:
            art = np.zeros((self.m, n_art))
            art[need, np.arange(n_art)] = 1.0
            basis[need] = self.n + np.arange(n_art)
            self.A = np.hstack([A, art])
        self.basis = basis
        self.allowed = np.ones(self.A.shape[1], dtype=bool)
        self.Binv = np.eye(self.m)
        self.cap = 50 * (self.m + self.n)
        self.degenerate = 0

    def run(self):
        n_total = self.A.shape[1]
        if self.n_art:
            c1 = np.zeros(n_total)
            c1[self.n:] = 1.0
            status = self._iterate(c1)
            if status is not Status.OPTIMAL:
                return Status.NUMERICAL_FAILURE if status is Status.UNBOUNDED else status
            xb = self.Binv @ self.b
            infeas = float(np.sum(xb[self.basis >= self.n]))
            if infeas > self.settings.feasibility_tol * max(1.0, float(np.max(self.b, initial=0.0))):
                return Status.INFEASIBLE
            self._drive_out_artificials()
            self.allowed[self.n:] = False
        c2 = np.zeros(n_total)
        c2[: self.n] = self.c
        return self._iterate(c2)

    def _refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)

    def _pivot(self, r, q, col):
        piv = col[r]
        Binv = self.Binv
        row = Binv[r] / piv
        Binv -= col[:, None] * row
        Binv[r] = row
        self.basis[r] = q
        self.pivots += 1
        if self.pivots % self.settings.refactor_every == 0:
            self._refactor()

    def _iterate(self, cost):
        s = self.settings
        A_act = self.A
        b_act = self.b
        blocked = ~self.allowed
        any_blocked = bool(blocked.any())
        while True:
            if self.pivots > self.cap:
                return Status.NUMERICAL_FAILURE
            xb = self.Binv @ b_act
            np.maximum(xb, 0.0, out=xb)
            y = cost[self.basis] @ self.Binv
            d = cost - y @ A_act
            d[self.basis] = 0.0
            if any_blocked:
                d[blocked] = 0.0
            if self.bland:
                cand = np.flatnonzero(d < -s.optimality_tol)
                if cand.size == 0:
                    return Status.OPTIMAL
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -s.optimality_tol:
                    return Status.OPTIMAL
            col = self.Binv @ A_act[:, q]
            ok = col > s.pivot_tol
            if not ok.any():
                return Status.UNBOUNDED
            ratios = np.full(self.m, np.inf)
            np.divide(xb, col, out=ratios, where=ok)
            tmin = ratios.min()
            ties = np.flatnonzero(ratios <= tmin + 1e-12 * max(1.0, tmin))
            if ties.size == 1:
                r = int(ties[0])
            elif self.bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(col[ties])])
            if tmin <= 1e-12:
                self.degenerate += 1
                if self.degenerate > 10 * self.m:
                    self.bland = True
            self._pivot(r, q, col)

    def _drive_out_artificials(self):
        # an artificial left basic marks a redundant row; its row of B^-1 A is
        # zero over real columns, so it stays at zero through phase II
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            row = self.Binv[r] @ self.A[:, : self.n]
            row[self.basis[self.basis < self.n]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                self._pivot(r, j, self.Binv @ self.A[:, j])

    def primal(self):
        z = np.zeros(self.A.shape[1])
        xb = self.Binv @ self.b
        z[self.basis] = np.maximum(xb, 0.0)
        return z[: self.n]

    def duals(self):
        cost = np.zeros(self.A.shape[1])
        cost[: self.n] = self.c
        return cost[self.basis] @ self.Binv


# ---------------------------------------------------------------------------
# dual route: few columns, many rows


def _solve_via_dual(problem, settings):
    m, n = problem.shape
    lo, up = problem.lower, problem.upper
    fin_lo = np.flatnonzero(np.isfinite(lo))
    fin_up = np.flatnonzero(np.isfinite(up))
    eye = np.eye(n)
    A = np.vstack([problem.A, eye[fin_lo], eye[fin_up]])
    b = np.concatenate([problem.b, lo[fin_lo], up[fin_up]])
    senses = list(problem.senses) + [GE] * fin_lo.size + [LE] * fin_up.size
    y_lo = np.array([0.0 if s == GE else -np.inf for s in senses])
    y_up = np.array([0.0 if s == LE else np.inf for s in senses])
    dual = LpProblem(c=-b, A=A.T, senses=(EQ,) * n, b=problem.c, lower=y_lo, upper=y_up)
    sol = _solve_primal(dual, settings)
    if not sol.optimal:
        return LpSolution(Status.NUMERICAL_FAILURE, iterations=sol.iterations)
    x = -sol.duals
    y = sol.x
    reduced = np.zeros(n)
    reduced[fin_lo] += y[m : m + fin_lo.size]
    reduced[fin_up] += y[m + fin_lo.size :]
    # clip the recovered primal into its box; drift here is at rounding level
    x = np.clip(x, lo, up)
    return LpSolution(Status.OPTIMAL, x=x, objective=float(problem.c @ x), duals=y[:m],
                      reduced_costs=reduced, iterations=sol.iterations,
                      info={"route": "dual", **sol.info})


# ---------------------------------------------------------------------------
# checks used by tests and callers


def primal_residual(problem: LpProblem, x: np.ndarray) -> float:
    """Largest scaled violation of rows and bounds at ``x``."""
    ax = problem.A @ x
    scale = 1.0 + np.abs(problem.b)
    viol = np.zeros(problem.b.size)
    for i, s in enumerate(problem.senses):
        if s == LE:
            viol[i] = max(0.0, ax[i] - problem.b[i])
        elif s == GE:
            viol[i] = max(0.0, problem.b[i] - ax[i])
        else:
            viol[i] = abs(ax[i] - problem.b[i])
    worst = float(np.max(viol / scale, initial=0.0))
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(problem.lower), problem.lower - x, 0.0)
        hi = np.where(np.isfinite(problem.upper), x - problem.upper, 0.0)
    return max(worst, float(np.max(lo, initial=0.0)), float(np.max(hi, initial=0.0)))


def dual_objective(problem: LpProblem, sol: LpSolution) -> float:
    """Dual objective ``b'y + sum of bound terms`` for an optimal solution."""
    d = sol.reduced_costs
    val = float(problem.b @ sol.duals)
    lo_part = np.where(d > 0, d * np.where(np.isfinite(problem.lower), problem.lower, 0.0), 0.0)
    up_part = np.where(d < 0, d * np.where(np.isfinite(problem.upper), problem.upper, 0.0), 0.0)
    return val + float(lo_part.sum() + up_part.sum())
