"""Sequential-sampling DRSD and the external-sampling DR L-shaped method.

Both methods keep an outer approximation

    f(x) = c'x + max_j (alpha_j + beta_j' x)

of the first-stage objective and minimize it over X in a master LP. DRSD
adds one observation per iteration, solves two second-stage LPs (candidate
and incumbent), and rescales older cuts by (k-1)/k so they remain valid as
the ambiguity set moves. DR L-shaped fixes the sample and solves every
subproblem each iteration.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguityConfig, Sample, separate, theta
from .lp import EQ, GE, LpError, LpProblem, LpSettings, solve_lp
from .model import ProblemInstance, make_rng, realize_batch, sample_observation
from .recourse import DualVertexSet, eval_recourse_approx, solve_subproblem

PHASES = ("master", "subproblem", "optimality", "argmax", "separation")


@dataclass
class Minorant:
    alpha: float
    beta: np.ndarray
    origin: str  # "seed", "candidate", "incumbent" or "drls"
    birth: int
    n_rescaled: int = 0
    scale: float = 1.0

    def __call__(self, x):
        return self.alpha + float(self.beta @ x)


class CutPool:
    """Array-backed collection of minorants; index 0 is the seed cut ``eta >= 0``."""

    def __init__(self, dx: int):
        self.dx = dx
        self.alphas = np.zeros(1)
        self.betas = np.zeros((1, dx))
        self.origins = ["seed"]
        self.births = np.zeros(1, dtype=int)
        self.n_rescaled = np.zeros(1, dtype=int)
        self.scales = np.ones(1)

    def __len__(self):
        return self.alphas.size

    def add(self, cut: Minorant):
        self.alphas = np.append(self.alphas, cut.alpha)
        self.betas = np.vstack([self.betas, np.asarray(cut.beta, dtype=float)[None, :]])
        self.origins.append(cut.origin)
        self.births = np.append(self.births, cut.birth)
        self.n_rescaled = np.append(self.n_rescaled, cut.n_rescaled)
        self.scales = np.append(self.scales, cut.scale)

    def rescale(self, th: float):
        """Multiply every non-seed cut by ``th`` (both intercept and slope)."""
        live = np.ones(len(self), dtype=bool)
        live[0] = False
        self.alphas[live] *= th
        self.betas[live] *= th
        self.scales[live] *= th
        self.n_rescaled[live] += 1

    def compact(self, min_scale: float):
        """Drop non-seed cuts whose cumulative rescale factor fell below ``min_scale``."""
        keep = self.scales >= min_scale
        keep[0] = True
        if keep.all():
            return
        self.alphas = self.alphas[keep]
        self.betas = self.betas[keep]
        self.origins = [o for o, k in zip(self.origins, keep) if k]
        self.births = self.births[keep]
        self.n_rescaled = self.n_rescaled[keep]
        self.scales = self.scales[keep]

    def values(self, x):
        return self.alphas + self.betas @ np.asarray(x, dtype=float)

    def max_value(self, x) -> float:
        return float(np.max(self.values(x)))

    def minorants(self):
        return [
            Minorant(float(a), b.copy(), o, int(bi), int(nr), float(s))
            for a, b, o, bi, nr, s in zip(self.alphas, self.betas, self.origins, self.births,
                                          self.n_rescaled, self.scales)
        ]

    def copy(self):
        new = CutPool(self.dx)
        new.alphas = self.alphas.copy()
        new.betas = self.betas.copy()
        new.origins = list(self.origins)
        new.births = self.births.copy()
        new.n_rescaled = self.n_rescaled.copy()
        new.scales = self.scales.copy()
        return new


def rescale_cuts(pool: CutPool, th: float) -> CutPool:
    """Rescale all previously generated cuts in place and return the pool."""
    if not 0.0 <= th <= 1.0:
        raise ValueError("rescale factor must lie in [0, 1]")
    pool.rescale(th)
    return pool


def objective_approx(pool: CutPool, inst: ProblemInstance, x) -> float:
    return float(inst.c @ x) + pool.max_value(x)


def solve_master(pool: CutPool, inst: ProblemInstance, settings: LpSettings = None):
    """Minimize ``c'x + eta`` over X subject to every cut; returns (x, value)."""
    dx = inst.dx
    n_cuts = len(pool)
    cost = np.append(inst.c, 1.0)
    cut_rows = np.hstack([-pool.betas, np.ones((n_cuts, 1))])
    A = np.vstack([cut_rows, np.hstack([inst.A, np.zeros((inst.A.shape[0], 1))])])
    b = np.concatenate([pool.alphas, inst.b])
    senses = (GE,) * n_cuts + tuple(inst.senses)
    lower = np.append(inst.x_lower, -np.inf)
    upper = np.append(inst.x_upper, np.inf)
    sol = solve_lp(LpProblem(cost, A, senses, b, lower, upper), settings)
    if not sol.optimal:
        raise LpError(f"master problem is {sol.status.value}; the first-stage set may be empty", sol.status)
    x = sol.x[:dx]
    return x, objective_approx(pool, inst, x)


def build_cut(weights, duals, R, Ts, origin="candidate", birth=0) -> Minorant:
    """Affine minorant from an extremal distribution and one dual per observation.

    ``duals`` is (n, m); ``R`` (n, m) and ``Ts`` (n, m, dx) hold the scenario data
    in the same order as ``weights``.
    """
    weights = np.asarray(weights, dtype=float)
    duals = np.asarray(duals, dtype=float)
    alpha = float(weights @ np.einsum("nm,nm->n", duals, R))
    beta = -np.einsum("n,nm,nmd->d", weights, duals, Ts)
    return Minorant(alpha, beta, origin, birth)


def incumbent_test(lhs: float, bracket: float, gamma: float) -> bool:
    """True when the candidate replaces the incumbent: ``lhs < gamma * bracket``.

    ``lhs = f_k(x_k) - f_k(xhat)`` and ``bracket = f_{k-1}(x_k) - f_{k-1}(xhat)``.
    """
    return lhs < gamma * bracket


@dataclass
class DRSDParams:
    tau: float = 1e-3
    gamma: float = 0.2
    k_min: int = 256
    k_max: int = 5000
    seed: int = 0
    x0: np.ndarray = None
    compact_below: float = 1e-6
    vertex_tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


@dataclass
class DRLSParams:
    N: int = 100
    tol: float = 1e-3
    seed: int = 0
    max_iters: int = 1000

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("sample size N must be at least 1")


@dataclass
class RunReport:
    method: str
    objective: float
    iterations: int
    unique_obs: int
    incumbent: np.ndarray
    counters: dict
    times: dict
    seed: int = 0
    status: str = "ok"
    max_delta: float = float("-inf")

    @property
    def label(self):
        return self.method


class _Clock:
    def __init__(self):
        self.times = dict.fromkeys(PHASES, 0.0)
        self._start = time.perf_counter()

    @contextmanager
    def __call__(self, phase):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.times[phase] += time.perf_counter() - t0

    def summary(self):
        out = {"total": time.perf_counter() - self._start}
        out.update(self.times)
        return out


class _ScenarioData:
    """Realized r(w), T(w) for the unique observations, grown as they arrive."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.R = np.zeros((0, inst.m))
        self.Ts = np.zeros((0, inst.m, inst.dx))

    def append(self, omega):
        r, T = realize_batch(self.inst, omega)
        self.R = np.concatenate([self.R, r])
        self.Ts = np.concatenate([self.Ts, T])


@dataclass
class IterationState:
    """Snapshot handed to the optional per-iteration callback of :func:`run_drsd`."""

    k: int
    x_candidate: np.ndarray
    x_incumbent: np.ndarray
    delta: float
    pool: CutPool
    pis: DualVertexSet
    sample: Sample
    R: np.ndarray
    Ts: np.ndarray
    candidate_cut: Minorant
    incumbent_cut: Minorant
    candidate_value: float
    replaced: bool
    extra: dict = field(default_factory=dict)


def run_drsd(inst: ProblemInstance, amb: AmbiguityConfig, params: DRSDParams = None,
             callback=None, settings: LpSettings = None) -> RunReport:
    """Distributionally robust stochastic decomposition."""
    p = params or DRSDParams()
    rng = make_rng(p.seed)
    clock = _Clock()
    pool = CutPool(inst.dx)
    pis = DualVertexSet.for_instance(inst, p.vertex_tol)
    sample = Sample(inst.d_omega)
    scen = _ScenarioData(inst)
    counters = {"subproblem": 0, "separation": 0, "argmax": 0, "master": 0}
    x_inc = None if p.x0 is None else np.asarray(p.x0, dtype=float)
    max_delta = -np.inf
    done = 0

    for k in range(1, p.k_max + 1):
        with clock("master"):
            x_k, _ = solve_master(pool, inst, settings)
        counters["master"] += 1
        if x_inc is None:
            x_inc = x_k.copy()

        with clock("optimality"):
            f_old_cand = objective_approx(pool, inst, x_k)
            f_old_inc = objective_approx(pool, inst, x_inc)
            delta = f_old_cand - f_old_inc
            if done >= p.k_min and f_old_inc - f_old_cand < p.tau * max(1.0, abs(f_old_inc)):
                break
        max_delta = max(max_delta, delta)

        omega = sample_observation(inst, rng)
        idx, is_new = sample.observe(omega)
        if is_new:
            scen.append(omega)

        with clock("subproblem"):
            q_c, pi_c = solve_subproblem(inst, x_k, omega, settings)
            q_i, pi_i = solve_subproblem(inst, x_inc, omega, settings)
        counters["subproblem"] += 2
        pis.add(pi_c)
        pis.add(pi_i)

        with clock("argmax"):
            ev_c = eval_recourse_approx(pis, x_k, None, R=scen.R, Ts=scen.Ts)
            ev_i = eval_recourse_approx(pis, x_inc, None, R=scen.R, Ts=scen.Ts)
            vals_c, duals_c = ev_c.values, pis.vertices[ev_c.indices]
            vals_i, duals_i = ev_i.values, pis.vertices[ev_i.indices]
            vals_c[idx], duals_c[idx] = q_c, pi_c
            vals_i[idx], duals_i[idx] = q_i, pi_i
        counters["argmax"] += 2 * (sample.n_unique - 1)

        with clock("separation"):
            P_c = separate(amb, sample, vals_c, settings)
            P_i = separate(amb, sample, vals_i, settings)
        counters["separation"] += 2

        cut_c = build_cut(P_c.weights, duals_c, scen.R, scen.Ts, "candidate", k)
        cut_i = build_cut(P_i.weights, duals_i, scen.R, scen.Ts, "incumbent", k)
        pool.rescale(theta(k))
        pool.add(cut_c)
        pool.add(cut_i)
        pool.compact(p.compact_below)

        with clock("optimality"):
            lhs = objective_approx(pool, inst, x_k) - objective_approx(pool, inst, x_inc)
            replaced = incumbent_test(lhs, delta, p.gamma)
        if replaced:
            x_inc = x_k.copy()
        done = k

        if callback is not None:
            callback(IterationState(
                k=k, x_candidate=x_k, x_incumbent=x_inc, delta=delta, pool=pool, pis=pis, sample=sample,
                R=scen.R, Ts=scen.Ts, candidate_cut=cut_c, incumbent_cut=cut_i,
                candidate_value=P_c.value, replaced=replaced,
            ))

    return RunReport(
        method="DRSD", objective=objective_approx(pool, inst, x_inc), iterations=done,
        unique_obs=sample.n_unique, incumbent=x_inc, counters=counters, times=clock.summary(),
        seed=p.seed, max_delta=float(max_delta),
    )


def run_drls(inst: ProblemInstance, amb: AmbiguityConfig, params: DRLSParams = None,
             callback=None, settings: LpSettings = None) -> RunReport:
    """Distributionally robust L-shaped method on a fixed sample of size N."""
    p = params or DRLSParams()
    rng = make_rng(p.seed)
    clock = _Clock()
    sample = Sample(inst.d_omega)
    for _ in range(p.N):
        sample.observe(sample_observation(inst, rng))
    obs = sample.observations.copy()
    R, Ts = realize_batch(inst, obs)
    pool = CutPool(inst.dx)
    counters = {"subproblem": 0, "separation": 0, "argmax": 0, "master": 0}
    best = (np.inf, None)
    status = "max_iters"
    iters = 0
    objective = np.inf
    x = None

    for it in range(1, p.max_iters + 1):
        with clock("master"):
            x, lower = solve_master(pool, inst, settings)
        counters["master"] += 1
        iters = it

        n = sample.n_unique
        vals = np.empty(n)
        duals = np.empty((n, inst.m))
        with clock("subproblem"):
            for i in range(n):
                vals[i], duals[i] = solve_subproblem(inst, x, obs[i], settings)
        counters["subproblem"] += n

        with clock("separation"):
            P = separate(amb, sample, vals, settings)
        counters["separation"] += 1

        with clock("optimality"):
            upper = float(inst.c @ x) + P.value
            if upper < best[0]:
                best = (upper, x.copy())
            converged = lower >= upper - p.tol * max(1.0, abs(upper))
        if callback is not None:
            callback({"iteration": it, "x": x, "lower": lower, "upper": upper, "pool": pool})
        if converged:
            status = "ok"
            objective = upper
            break
        pool.add(build_cut(P.weights, duals, R, Ts, "drls", it))
    else:
        objective, x = best

    return RunReport(
        method=f"DRLS-{p.N}", objective=objective, iterations=iters, unique_obs=sample.n_unique,
        incumbent=x, counters=counters, times=clock.summary(), seed=p.seed, status=status,
    )
