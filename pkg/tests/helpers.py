"""Shared test utilities: bundled instances, random instances, points in X."""
import os

import numpy as np

from drsd.lp import LpProblem, solve_lp
from drsd.model import first_stage_box, instance_from_dict, load_instance
from drsd.recourse import eval_recourse_approx
from drsd.ambiguity import separate

DATA = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src", "drsd", "data"))
TINY = ("t1.json", "t2_capacity.json", "t3_yield.json", "t4_transship.json")

# filled by the acceptance module, printed by conftest at the end of the run
ACCEPTANCE_LINES = []


def bundled(name):
    return load_instance(os.path.join(DATA, name))


def t1_dict():
    return {
        "name": "T1",
        "first_stage": {"c": [1.0], "A": [], "senses": [], "b": [], "lb": [0.0], "ub": [10.0]},
        "second_stage": {"g": [1.0, 0.0], "W": [[1.0, -1.0]], "r": [0.0], "T": [[1.0]]},
        "random": [{"target": "rhs", "row": 0, "coord": 0}],
        "distribution": {"type": "scenarios", "omegas": [[1.0], [3.0]], "probs": [0.5, 0.5]},
    }


def random_points(inst, rng, n):
    """Uniform points of the bounding box of X, kept only when feasible for A x (sense) b."""
    lo, hi = first_stage_box(inst)
    out = []
    while len(out) < n:
        X = rng.uniform(lo, hi, size=(4 * n, inst.dx))
        ok = np.ones(len(X), dtype=bool)
        if inst.A.shape[0]:
            AX = X @ inst.A.T
            for i, s in enumerate(inst.senses):
                if s == "<=":
                    ok &= AX[:, i] <= inst.b[i]
                elif s == ">=":
                    ok &= AX[:, i] >= inst.b[i]
                else:
                    ok &= np.isclose(AX[:, i], inst.b[i])
        out.extend(X[ok][: n - len(out)])
    return np.array(out)


def random_instance(rng, dx=None, m=None, tech=True):
    """Random instance with complete recourse: W = [I, -I, extra] and g >= 0."""
    dx = dx or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 4))
    extra = int(rng.integers(0, 3))
    E = rng.integers(-2, 3, size=(m, extra)).astype(float)
    W = np.hstack([np.eye(m), -np.eye(m), E])
    gp = rng.uniform(0.5, 3.0, m)
    gm = rng.uniform(0.5, 3.0, m)
    # extra columns sometimes undercut the identity blocks, which adds dual vertices
    ge = (np.abs(E).T @ np.maximum(gp, gm)) * rng.uniform(0.3, 1.2, extra)
    g = np.concatenate([gp, gm, ge])
    d_omega = int(rng.integers(1, 3))
    entries = [{"target": "rhs", "row": i % m, "coord": i % d_omega} for i in range(min(m, 2))]
    if tech:
        entries.append({"target": "tech", "row": m - 1, "col": 0, "coord": d_omega - 1})
    omegas = rng.integers(0, 6, size=(int(rng.integers(2, 6)), d_omega)).astype(float)
    probs = rng.dirichlet(np.ones(len(omegas)))
    probs[-1] = 1.0 - probs[:-1].sum()
    doc = {
        "name": "random",
        "first_stage": {"c": rng.uniform(0.1, 2.0, dx).tolist(), "A": [np.ones(dx).tolist()], "senses": ["<="],
                        "b": [float(3 * dx)], "lb": [0.0] * dx, "ub": [5.0] * dx},
        "second_stage": {"g": g.tolist(), "W": W.tolist(), "r": rng.uniform(0, 4, m).tolist(),
                         "T": rng.uniform(-1, 1, (m, dx)).tolist()},
        "random": entries,
        "distribution": {"type": "scenarios", "omegas": omegas.tolist(), "probs": probs.tolist()},
    }
    return instance_from_dict(doc)


class Theorem1Checker:
    """Callback for run_drsd: pooled cuts must stay below the approximate worst case.

    At every iteration and for ``n_points`` random x in X, the max over the pool
    of alpha + beta'x is compared with the separation value computed from
    the argmax recourse values over the current sample.
    """

    def __init__(self, inst, amb, seed=0, n_points=20, tol=1e-7):
        self.inst, self.amb, self.tol = inst, amb, tol
        self.rng = np.random.default_rng(seed)
        self.n_points = n_points
        self.checks = 0
        self.violations = []
        self.deltas = []

    def __call__(self, state):
        self.deltas.append(state.delta)
        for x in random_points(self.inst, self.rng, self.n_points):
            ev = eval_recourse_approx(state.pis, x, None, R=state.R, Ts=state.Ts)
            bound = separate(self.amb, state.sample, ev.values).value
            cut = state.pool.max_value(x)
            self.checks += 1
            if cut > bound + self.tol * max(1.0, abs(bound)):
                self.violations.append((state.k, x, cut, bound))


def lp_vertex_oracle(c, A, senses, b, lo, up):
    """Brute-force LP optimum by enumerating basic solutions of the bounded box form.

    Returns (status, value) with status in {"optimal", "infeasible"}; only for
    problems whose variables all have finite bounds.
    """
    import itertools
    c = np.asarray(c, float)
    n = c.size
    rows, rhs, eq = [], [], []
    for a, s, bi in zip(A, senses, b):
        if s == "<=":
            rows.append(a); rhs.append(bi); eq.append(False)
        elif s == ">=":
            rows.append(-np.asarray(a)); rhs.append(-bi); eq.append(False)
        else:
            rows.append(a); rhs.append(bi); eq.append(True)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append(-e); rhs.append(-lo[j]); eq.append(False)
        rows.append(e); rhs.append(up[j]); eq.append(False)
    G = np.array(rows, float)
    h = np.array(rhs, float)
    eq = np.array(eq)
    in_idx = np.flatnonzero(~eq)
    all_eq = np.flatnonzero(eq)
    # keep an independent subset of the equality rows; the dropped ones are
    # still checked for feasibility below
    eq_idx = []
    for i in all_eq:
        if np.linalg.matrix_rank(G[eq_idx + [i]]) > len(eq_idx):
            eq_idx.append(i)
    eq_idx = np.array(eq_idx, dtype=int)
    k = n - eq_idx.size
    best = None
    combos = itertools.combinations(in_idx, k)
    first = True
    while True:
        if k == 0:
            if not first:
                break
            chunk = np.zeros((1, 0), dtype=np.int64)
        else:
            flat = itertools.chain.from_iterable(itertools.islice(combos, 50000))
            chunk = np.fromiter(flat, dtype=np.int64).reshape(-1, k)
            if chunk.shape[0] == 0:
                break
        first = False
        act = np.hstack([np.broadcast_to(eq_idx, (chunk.shape[0], eq_idx.size)), chunk])
        M = G[act]
        ok = np.abs(np.linalg.det(M)) > 1e-9
        if not ok.any():
            continue
        X = np.linalg.solve(M[ok], h[act][ok][:, :, None])[:, :, 0]
        feas = np.all(X @ G[in_idx].T <= h[in_idx] + 1e-7, axis=1)
        if all_eq.size:
            feas &= np.all(np.abs(X @ G[all_eq].T - h[all_eq]) <= 1e-7, axis=1)
        if feas.any():
            v = float((X[feas] @ c).min())
            best = v if best is None else min(best, v)
    return ("infeasible", None) if best is None else ("optimal", best)


def lp_problem(c, A, senses, b, lo, up):
    return LpProblem(c, A, senses, b, lo, up)


def solve(p):
    return solve_lp(p)
