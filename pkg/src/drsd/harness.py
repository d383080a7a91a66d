"""Replications, summary statistics, report tables, and a brute-force oracle."""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .algorithms import DRLSParams, DRSDParams, RunReport, run_drls, run_drsd
from .ambiguity import AmbiguityConfig, moment_features, transport_costs
from .model import ProblemInstance, first_stage_box, load_instance, realize_batch

CSV_COLUMNS = ("rep", "seed", "method", "iterations", "objective", "unique_obs",
               "t_total", "t_master", "t_sub", "t_opt", "t_argmax", "t_sep", "status")
_TIME_KEYS = (("t_total", "total"), ("t_master", "master"), ("t_sub", "subproblem"),
              ("t_opt", "optimality"), ("t_argmax", "argmax"), ("t_sep", "separation"))


@dataclass
class ExperimentConfig:
    instance: object  # path or ProblemInstance
    method: str = "drsd"
    ambiguity: AmbiguityConfig = field(default_factory=AmbiguityConfig)
    params: object = None  # DRSDParams or DRLSParams; the seed is set per replication
    reps: int = 30
    base_seed: int = 0
    out: str = None
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        if self.method not in ("drsd", "drls"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if self.params is None:
            self.params = DRSDParams() if self.method == "drsd" else DRLSParams()

    def seeds(self):
        return [self.base_seed + i for i in range(self.reps)]


@dataclass
class StatsRow:
    label: str
    n_ok: int
    n_failed: int
    iterations: float
    iterations_hw: float
    objective: float
    objective_hw: float
    unique_obs: float
    unique_obs_hw: float
    times: dict
    degenerate: bool = False


@dataclass
class ReplicationResult:
    stats: StatsRow
    reports: list
    csv_text: str


def half_width(values, level=0.95) -> float:
    """Student-t confidence half-width; 0 for fewer than two values."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return 0.0
    s = float(np.std(values, ddof=1))
    return float(stats.t.ppf(0.5 + level / 2, n - 1) * s / math.sqrt(n))


def _run_one(args):
    inst, method, amb, params = args
    try:
        if method == "drsd":
            return run_drsd(inst, amb, params)
        return run_drls(inst, amb, params)
    except Exception as e:  # recorded per replication
        return f"failed: {type(e).__name__}: {e}"


def replicate(config: ExperimentConfig) -> ReplicationResult:
    """Run independent replications with seeds ``base_seed + i`` and aggregate."""
    inst = config.instance
    if not isinstance(inst, ProblemInstance):
        inst = load_instance(inst)
    jobs = [(inst, config.method, config.ambiguity, replace(config.params, seed=s)) for s in config.seeds()]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    label = _label(config)
    reports = [r if isinstance(r, RunReport) else None for r in results]
    ok = [r for r in reports if r is not None]
    row = summarize(label, ok, n_failed=len(reports) - len(ok))
    text = _csv_text(config, label, results, row)
    if config.out:
        with open(config.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return ReplicationResult(stats=row, reports=reports, csv_text=text)


def _label(config):
    if config.method == "drsd":
        return "DRSD"
    return f"DRLS-{config.params.N}"


def summarize(label: str, reports, n_failed: int = 0) -> StatsRow:
    its = [r.iterations for r in reports]
    obj = [r.objective for r in reports]
    uniq = [r.unique_obs for r in reports]
    mean = (lambda v: float(np.mean(v)) if len(v) else float("nan"))
    times = {k: mean([r.times.get(k, 0.0) for r in reports]) for _, k in _TIME_KEYS}
    return StatsRow(
        label=label, n_ok=len(reports), n_failed=n_failed,
        iterations=mean(its), iterations_hw=half_width(its),
        objective=mean(obj), objective_hw=half_width(obj),
        unique_obs=mean(uniq), unique_obs_hw=half_width(uniq),
        times=times, degenerate=len(reports) < 2,
    )


def _fmt(v):
    return repr(float(v))


def _csv_text(config, label, results, row):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, (seed, res) in enumerate(zip(config.seeds(), results)):
        if isinstance(res, RunReport):
            times = [_fmt(res.times[k]) if config.timing else "" for _, k in _TIME_KEYS]
            w.writerow([i, seed, label, res.iterations, _fmt(res.objective), res.unique_obs, *times, res.status])
        else:
            w.writerow([i, seed, label, "", "", "", *[""] * 6, res])
    mean_times = [_fmt(row.times[k]) if config.timing else "" for _, k in _TIME_KEYS]
    w.writerow(["mean", "", label, _fmt(row.iterations), _fmt(row.objective), _fmt(row.unique_obs),
                *mean_times, f"ok={row.n_ok} failed={row.n_failed}"])
    w.writerow(["hw95", "", label, _fmt(row.iterations_hw), _fmt(row.objective_hw), _fmt(row.unique_obs_hw),
                *[""] * 6, "degenerate" if row.degenerate else ""])
    return buf.getvalue()


def format_estimates_table(rows) -> str:
    """Iterations, objective and unique observations as ``mean (±half-width)``."""
    lines = ["Method | # Iterations | Objective Estimate | # Unique Obs."]
    for r in rows:
        lines.append(f"{r.label} | {r.iterations:.3f} (±{r.iterations_hw:.2f}) | "
                     f"{r.objective:.3f} (±{r.objective_hw:.2f}) | {r.unique_obs:.3f} (±{r.unique_obs_hw:.2f})")
    return "\n".join(lines)


def format_times_table(rows) -> str:
    """Mean wall time per phase, in seconds."""
    lines = ["Method | Total | Master | Subproblem | Optimality | Argmax | Separation"]
    for r in rows:
        t = r.times
        argmax = "-" if r.label.startswith("DRLS") else f"{t['argmax']:.4f}"
        lines.append(f"{r.label} | {t['total']:.4f} | {t['master']:.4f} | {t['subproblem']:.4f} | "
                     f"{t['optimality']:.4f} | {argmax} | {t['separation']:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# brute-force oracle on small finite supports
#
# Recourse values come from enumerating every vertex of {pi : W'pi <= g};
# moment sets are handled by enumerating the vertices of the distribution
# polytope, Wasserstein balls by minimizing the Lagrangian dual in the
# transport budget. None of this goes through the simplex kernel.


@dataclass
class GridSpec:
    step: float = 1e-3
    points_per_dim: int = 41
    window: float = 2.0  # refinement half-width in units of the previous step


class OracleError(ValueError):
    pass


def enumerate_dual_vertices(W, g, tol=1e-9) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    g = np.asarray(g, dtype=float)
    m, dy = W.shape
    out = []
    for S in itertools.combinations(range(dy), m):
        M = W[:, S].T
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        pi = np.linalg.solve(M, g[list(S)])
        if np.all(W.T @ pi <= g + tol):
            out.append(pi)
    if not out:
        raise OracleError("dual polyhedron has no vertices")
    V = np.unique(np.round(np.array(out), 12), axis=0)
    return V


def enumerate_polytope_vertices(E, rhs, tol=1e-10) -> np.ndarray:
    """Vertices of ``{p >= 0 : E p = rhs}`` by basis enumeration."""
    E = np.asarray(E, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    # keep a maximal independent set of rows
    keep = []
    for i in range(E.shape[0]):
        if np.linalg.matrix_rank(E[keep + [i]]) > len(keep):
            keep.append(i)
    E, rhs = E[keep], rhs[keep]
    r, n = E.shape
    verts = []
    for S in itertools.combinations(range(n), r):
        B = E[:, S]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        pS = np.linalg.solve(B, rhs)
        if np.all(pS >= -tol):
            p = np.zeros(n)
            p[list(S)] = np.maximum(pS, 0.0)
            if np.allclose(E @ p, rhs, atol=1e-9):
                verts.append(p)
    if not verts:
        raise OracleError("ambiguity polytope is empty")
    return np.unique(np.round(np.array(verts), 13), axis=0)


def moment_vertices(points, probs, q, cross_moments=False):
    """Vertices of the distributions on ``points`` sharing the moments of ``probs``."""
    psi = moment_features(points, q, cross_moments)
    b = np.asarray(probs, dtype=float) @ psi
    E = np.vstack([np.ones((1, points.shape[0])), psi.T])
    return enumerate_polytope_vertices(E, np.concatenate([[1.0], b]))


def wasserstein_worst_case(Q, cost, p_ref, eps, iters=200):
    """max_p sum p Q over the Wasserstein ball, for many value vectors at once.

    ``Q`` is (npts, n). Uses the dual ``min_{lam>=0} lam*eps + sum_j p_ref_j
    max_i (Q_i - lam c_ij)``, a convex piecewise-linear function of lam,
    minimized by bisection on its subgradient.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(cost, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    off = c > 0
    spread = Q[:, :, None] - Q[:, None, :]  # Q_i - Q_j
    ratio = np.where(off[None], spread / np.where(off, c, 1.0)[None], 0.0)
    lam_hi = np.maximum(ratio.max(axis=(1, 2)), 0.0) + 1.0
    lam_lo = np.zeros(Q.shape[0])

    def dual(lam):
        inner = Q[:, :, None] - lam[:, None, None] * c[None]
        best = inner.argmax(axis=1)  # (npts, n) over i for each j
        val = lam * eps + np.einsum("j,pj->p", p_ref, np.take_along_axis(inner, best[:, None, :], 1)[:, 0, :])
        grad = eps - np.einsum("j,pj->p", p_ref, c[best, np.arange(c.shape[1])[None, :]])
        return val, grad

    for _ in range(iters):
        mid = 0.5 * (lam_lo + lam_hi)
        _, grad = dual(mid)
        up = grad > 0
        lam_hi = np.where(up, mid, lam_hi)
        lam_lo = np.where(up, lam_lo, mid)
    v_lo, _ = dual(lam_lo)
    v_hi, _ = dual(lam_hi)
    return np.minimum(v_lo, v_hi)


def _grid_points(lo, hi, n_per_dim):
    axes = [np.linspace(a, b, n_per_dim) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


def _feasible(inst, X, tol=1e-9):
    if inst.A.shape[0] == 0:
        return np.ones(X.shape[0], dtype=bool)
    AX = X @ inst.A.T
    ok = np.ones(X.shape[0], dtype=bool)
    for i, s in enumerate(inst.senses):
        if s == "<=":
            ok &= AX[:, i] <= inst.b[i] + tol
        elif s == ">=":
            ok &= AX[:, i] >= inst.b[i] - tol
        else:
            ok &= np.abs(AX[:, i] - inst.b[i]) <= tol
    return ok


def brute_force_dro(inst: ProblemInstance, amb: AmbiguityConfig, grid: GridSpec = None, max_support=32):
    """Grid minimizer of ``c'x + worst-case E[Q(x, w)]`` over the full support.

    The ambiguity set is built from the true distribution: moment sets use
    its exact moments, Wasserstein balls are centred on it. Returns (x, value).
    """
    grid = grid or GridSpec()
    if inst.dx > 2:
        raise OracleError("brute-force oracle supports at most two first-stage variables")
    points, probs = inst.true_distribution.support()
    if points.shape[0] > max_support:
        raise OracleError(f"support of size {points.shape[0]} exceeds {max_support}")
    V = enumerate_dual_vertices(inst.W, inst.g)
    R, Ts = realize_batch(inst, points)

    if amb.kind == "moment":
        dists = moment_vertices(points, probs, amb.q, amb.cross_moments)

        def worst(Qm):
            return (Qm @ dists.T).max(axis=1)
    else:
        cost = transport_costs(points)

        def worst(Qm):
            return wasserstein_worst_case(Qm, cost, probs, amb.eps)

    def objective(X):
        H = R[None] - np.einsum("nmd,pd->pnm", Ts, X)  # (npts, n, m)
        Qm = np.max(H @ V.T, axis=2)
        return X @ inst.c + worst(Qm)

    lo, hi = first_stage_box(inst)
    box_lo, box_hi = lo.copy(), hi.copy()
    step = np.max(hi - lo) / (grid.points_per_dim - 1)
    best_x, best_v = None, np.inf
    while True:
        X = _grid_points(lo, hi, grid.points_per_dim)
        X = X[_feasible(inst, X)]
        if X.size:
            vals = objective(X)
            i = int(np.argmin(vals))
            if vals[i] < best_v:
                best_x, best_v = X[i], float(vals[i])
        if step <= grid.step or best_x is None:
            break
        half = grid.window * step
        lo = np.maximum(best_x - half, box_lo)
        hi = np.minimum(best_x + half, box_hi)
        step = max(np.max(hi - lo) / (grid.points_per_dim - 1), grid.step)
        n_pts = int(round(np.max(hi - lo) / step)) + 1
        grid = replace(grid, points_per_dim=max(n_pts, 2))
    if best_x is None:
        raise OracleError("no feasible grid point")
    return best_x, best_v
