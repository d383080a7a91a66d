"""Two-stage instance data, its JSON file format, and scenario realization.

An instance describes

    min  c'x + max_P E_P[Q(x, w)]     s.t.  A x (senses) b,  lb <= x <= ub

with second stage ``Q(x, w) = min g'y  s.t.  W y = r(w) - T(w) x, y >= 0``.
``r`` and ``T`` are deterministic templates with selected cells overwritten
by coordinates of the observation ``w``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .lp import EQ, GE, LE, LpProblem, Status, solve_lp

_SENSE_ALIASES = {"<=": LE, "L": LE, "=": EQ, "==": EQ, "E": EQ, ">=": GE, "G": GE}


class InstanceError(ValueError):
    """Invalid instance file or data; ``line`` is set when it can be located."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RandomEntry:
    target: str  # "rhs" or "tech"
    row: int
    col: int | None
    coord: int

    @property
    def cell(self):
        return (self.target, self.row, self.col)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Finite true distribution: a scenario list, or independent marginals."""

    kind: str  # "scenarios" or "independent"
    omegas: np.ndarray = None  # (n_scen, d_omega)
    probs: np.ndarray = None
    marginals: tuple = ()  # ((values, probs), ...)

    @property
    def dim(self):
        if self.kind == "scenarios":
            return self.omegas.shape[1]
        return len(self.marginals)

    @property
    def support_size(self):
        if self.kind == "scenarios":
            return self.omegas.shape[0]
        return math.prod(len(v) for v, _ in self.marginals)

    def support(self):
        """All scenarios with their probabilities (product form expanded)."""
        if self.kind == "scenarios":
            return self.omegas.copy(), self.probs.copy()
        values = [v for v, _ in self.marginals]
        probs = [p for _, p in self.marginals]
        pts = np.array(list(itertools.product(*values)), dtype=float).reshape(-1, self.dim)
        pr = np.array([math.prod(t) for t in itertools.product(*probs)], dtype=float)
        return pts, pr

    def __eq__(self, other):
        if not isinstance(other, Distribution) or self.kind != other.kind:
            return False
        if self.kind == "scenarios":
            return np.array_equal(self.omegas, other.omegas) and np.array_equal(self.probs, other.probs)
        return len(self.marginals) == len(other.marginals) and all(
            np.array_equal(v1, v2) and np.array_equal(p1, p2)
            for (v1, p1), (v2, p2) in zip(self.marginals, other.marginals)
        )


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    name: str
    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    g: np.ndarray
    W: np.ndarray
    r_base: np.ndarray
    T_base: np.ndarray
    random_entries: tuple
    true_distribution: Distribution

    @property
    def dx(self):
        return self.c.size

    @property
    def dy(self):
        return self.g.size

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def d_omega(self):
        return self.true_distribution.dim

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        arrays = ("c", "A", "b", "x_lower", "x_upper", "g", "W", "r_base", "T_base")
        return (
            self.name == other.name
            and self.senses == other.senses
            and self.random_entries == other.random_entries
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.true_distribution == other.true_distribution
        )


# ---------------------------------------------------------------------------
# parsing and serialization


def _line_of(text, key):
    if text is None:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _vec(obj, key, text, allow_null=False):
    try:
        vals = obj[key]
    except KeyError:
        raise InstanceError(f"missing key {key!r}", _line_of(text, key)) from None
    if allow_null:
        vals = [math.inf if v is None else v for v in vals]
    try:
        arr = np.array(vals, dtype=float)
    except (TypeError, ValueError):
        raise InstanceError(f"{key!r} must be a list of numbers", _line_of(text, key)) from None
    if arr.ndim != 1:
        raise InstanceError(f"{key!r} must be a vector", _line_of(text, key))
    return arr


def _mat(obj, key, ncols, text):
    rows = obj.get(key, [])
    if len(rows) == 0:
        return np.zeros((0, ncols))
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError):
        raise InstanceError(f"{key!r} must be a dense matrix of numbers", _line_of(text, key)) from None
    if arr.ndim != 2 or arr.shape[1] != ncols:
        raise InstanceError(f"{key!r} must have {ncols} columns, got shape {arr.shape}", _line_of(text, key))
    return arr


def parse_instance(text: str) -> ProblemInstance:
    """Parse and validate the JSON text of an instance file."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"syntax error: {e.msg} (column {e.colno})", e.lineno) from None
    return instance_from_dict(doc, text=text)


def load_instance(path) -> ProblemInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def instance_from_dict(doc: dict, text: str = None) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceError("top level must be a JSON object", 1 if text else None)
    for key in ("first_stage", "second_stage", "distribution"):
        if key not in doc:
            raise InstanceError(f"missing section {key!r}", _line_of(text, key))
    fs, ss = doc["first_stage"], doc["second_stage"]

    c = _vec(fs, "c", text)
    dx = c.size
    A = _mat(fs, "A", dx, text)
    m1 = A.shape[0]
    b = _vec(fs, "b", text) if "b" in fs else np.zeros(0)
    senses_raw = fs.get("senses", [GE] * m1)
    try:
        senses = tuple(_SENSE_ALIASES[s] for s in senses_raw)
    except (KeyError, TypeError):
        raise InstanceError(f"row senses must be one of {sorted(_SENSE_ALIASES)}", _line_of(text, "senses")) from None
    if b.size != m1 or len(senses) != m1:
        raise InstanceError(f"first stage has {m1} rows but {b.size} rhs entries and {len(senses)} senses",
                            _line_of(text, "b"))
    lb = _vec(fs, "lb", text, allow_null=True) if "lb" in fs else np.zeros(dx)
    ub = _vec(fs, "ub", text, allow_null=True) if "ub" in fs else np.full(dx, math.inf)
    if "lb" in fs:
        lb = np.where(np.isposinf(lb), -math.inf, lb)
    if lb.size != dx or ub.size != dx:
        raise InstanceError(f"bounds must have length {dx}", _line_of(text, "lb" if lb.size != dx else "ub"))

    g = _vec(ss, "g", text)
    dy = g.size
    W = _mat(ss, "W", dy, text)
    m = W.shape[0]
    r = _vec(ss, "r", text) if "r" in ss else np.zeros(m)
    T = _mat(ss, "T", dx, text) if "T" in ss else np.zeros((m, dx))
    if r.size != m:
        raise InstanceError(f"second-stage rhs has {r.size} entries, W has {m} rows", _line_of(text, "r"))
    if T.shape != (m, dx):
        raise InstanceError(f"T must be {m}x{dx}, got {T.shape}", _line_of(text, "T"))

    dist = _parse_distribution(doc["distribution"], text)
    entries = []
    for item in doc.get("random", []):
        try:
            target = item["target"]
            row = int(item["row"])
            coord = int(item["coord"])
            col = int(item["col"]) if target == "tech" else None
        except (KeyError, TypeError, ValueError):
            raise InstanceError("random entries need target, row, coord (and col for tech)",
                                _line_of(text, "random")) from None
        if target not in ("rhs", "tech"):
            raise InstanceError(f"random target must be 'rhs' or 'tech', got {target!r}", _line_of(text, "target"))
        entries.append(RandomEntry(target, row, col, coord))

    inst = ProblemInstance(
        name=str(doc.get("name", "")), c=c, A=A, senses=senses, b=b, x_lower=lb, x_upper=ub,
        g=g, W=W, r_base=r, T_base=T, random_entries=tuple(entries), true_distribution=dist,
    )
    validate_instance(inst, text=text)
    for arr in (c, A, b, lb, ub, g, W, r, T):
        arr.setflags(write=False)
    return inst


def _parse_distribution(d, text):
    kind = d.get("type")
    if kind == "scenarios":
        try:
            omegas = np.array(d["omegas"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise InstanceError("scenario distribution needs a numeric 'omegas' matrix", _line_of(text, "omegas")) from None
        if omegas.ndim == 1:
            omegas = omegas[:, None]
        probs = _vec(d, "probs", text)
        if omegas.ndim != 2 or omegas.shape[0] != probs.size or probs.size == 0:
            raise InstanceError("'omegas' and 'probs' must have the same (non-zero) length", _line_of(text, "probs"))
        _check_probs(probs, text, "probs")
        omegas.setflags(write=False)
        probs.setflags(write=False)
        return Distribution("scenarios", omegas=omegas, probs=probs)
    if kind == "independent":
        margs = []
        for mg in d.get("marginals", []):
            v = _vec(mg, "values", text)
            p = _vec(mg, "probs", text)
            if v.size != p.size or v.size == 0:
                raise InstanceError("marginal 'values' and 'probs' lengths differ", _line_of(text, "marginals"))
            _check_probs(p, text, "marginals")
            v.setflags(write=False)
            p.setflags(write=False)
            margs.append((v, p))
        if not margs:
            raise InstanceError("independent distribution needs at least one marginal", _line_of(text, "marginals"))
        return Distribution("independent", marginals=tuple(margs))
    raise InstanceError(f"distribution type must be 'scenarios' or 'independent', got {kind!r}",
                        _line_of(text, "type"))


def _check_probs(p, text, key):
    if np.any(p < 0):
        raise InstanceError("probabilities must be non-negative", _line_of(text, key))
    total = float(math.fsum(p))
    if abs(total - 1.0) > 1e-12:
        raise InstanceError(f"probabilities sum to {total!r}, expected 1", _line_of(text, key))


def validate_instance(inst: ProblemInstance, text: str = None) -> None:
    """Check dimensions, recourse assumptions, and boundedness of the first stage."""
    d_omega = inst.d_omega
    if not np.all(np.isfinite(inst.true_distribution.support()[0])):
        raise InstanceError("scenario values must be finite", _line_of(text, "distribution"))
    cells = set()
    for e in inst.random_entries:
        if not 0 <= e.coord < d_omega:
            raise InstanceError(f"random entry coord {e.coord} out of range for d_omega={d_omega}",
                                _line_of(text, "coord"))
        if not 0 <= e.row < inst.m:
            raise InstanceError(f"random entry row {e.row} out of range", _line_of(text, "row"))
        if e.target == "tech" and not 0 <= e.col < inst.dx:
            raise InstanceError(f"random entry col {e.col} out of range", _line_of(text, "col"))
        if e.cell in cells:
            raise InstanceError(f"duplicate random entry target {e.cell}", _line_of(text, "random"))
        cells.add(e.cell)
    if np.any(inst.g < 0):
        raise InstanceError(
            "second-stage costs must be non-negative so that the zero dual is feasible "
            "(normalize the recourse so that Q(x, w) >= 0)", _line_of(text, "g"))
    if np.any(inst.x_lower > inst.x_upper):
        raise InstanceError("lb exceeds ub", _line_of(text, "lb"))
    first_stage_box(inst, text=text)


def first_stage_box(inst: ProblemInstance, text: str = None):
    """Tightest box around X; raises if X is empty or unbounded."""
    lo = np.array(inst.x_lower, dtype=float)
    hi = np.array(inst.x_upper, dtype=float)
    zero = np.zeros(inst.dx)
    feas = solve_lp(LpProblem(zero, inst.A, inst.senses, inst.b, inst.x_lower, inst.x_upper))
    if feas.status is Status.INFEASIBLE:
        raise InstanceError("first-stage feasible set is empty", _line_of(text, "first_stage"))
    for j in range(inst.dx):
        for sign, bound in ((1.0, lo), (-1.0, hi)):
            if np.isfinite(bound[j]):
                continue
            cost = zero.copy()
            cost[j] = sign
            sol = solve_lp(LpProblem(cost, inst.A, inst.senses, inst.b, inst.x_lower, inst.x_upper))
            if sol.status is not Status.OPTIMAL:
                raise InstanceError(f"first-stage variable x[{j}] is unbounded; X must be compact",
                                    _line_of(text, "ub"))
            bound[j] = sol.x[j]
    return lo, hi


def instance_to_dict(inst: ProblemInstance) -> dict:
    def fl(v):
        return None if math.isinf(v) else float(v)

    fs = {
        "c": inst.c.tolist(), "A": inst.A.tolist(), "senses": list(inst.senses), "b": inst.b.tolist(),
        "lb": [fl(v) for v in inst.x_lower], "ub": [fl(v) for v in inst.x_upper],
    }
    ss = {"g": inst.g.tolist(), "W": inst.W.tolist(), "r": inst.r_base.tolist(), "T": inst.T_base.tolist()}
    rand = []
    for e in inst.random_entries:
        item = {"target": e.target, "row": e.row}
        if e.target == "tech":
            item["col"] = e.col
        item["coord"] = e.coord
        rand.append(item)
    d = inst.true_distribution
    if d.kind == "scenarios":
        dist = {"type": "scenarios", "omegas": d.omegas.tolist(), "probs": d.probs.tolist()}
    else:
        dist = {"type": "independent",
                "marginals": [{"values": v.tolist(), "probs": p.tolist()} for v, p in d.marginals]}
    return {"name": inst.name, "first_stage": fs, "second_stage": ss, "random": rand, "distribution": dist}


def serialize_instance(inst: ProblemInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2)


# ---------------------------------------------------------------------------
# scenario data


def realize(inst: ProblemInstance, omega) -> tuple[np.ndarray, np.ndarray]:
    """Second-stage rhs ``r(w)`` and technology matrix ``T(w)``."""
    omega = np.asarray(omega, dtype=float).ravel()
    if omega.size != inst.d_omega:
        raise ValueError(f"observation has length {omega.size}, expected {inst.d_omega}")
    r = np.array(inst.r_base, dtype=float)
    T = np.array(inst.T_base, dtype=float)
    for e in inst.random_entries:
        if e.target == "rhs":
            r[e.row] = omega[e.coord]
        else:
            T[e.row, e.col] = omega[e.coord]
    return r, T


def realize_batch(inst: ProblemInstance, omegas) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``r`` (n, m) and ``T`` (n, m, dx) for many observations."""
    omegas = np.asarray(omegas, dtype=float).reshape(-1, inst.d_omega)
    n = omegas.shape[0]
    R = np.tile(inst.r_base, (n, 1))
    Ts = np.tile(inst.T_base, (n, 1, 1))
    for e in inst.random_entries:
        if e.target == "rhs":
            R[:, e.row] = omegas[:, e.coord]
        else:
            Ts[:, e.row, e.col] = omegas[:, e.coord]
    return R, Ts


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator from a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))


def sample_observation(inst: ProblemInstance, rng: np.random.Generator) -> np.ndarray:
    """Draw one observation by inverse CDF (scenarios in file order)."""
    d = inst.true_distribution
    if d.kind == "scenarios":
        idx = _inverse_cdf(d.probs, rng.random())
        return np.array(d.omegas[idx], dtype=float)
    return np.array([v[_inverse_cdf(p, rng.random())] for v, p in d.marginals], dtype=float)


def _inverse_cdf(probs, u):
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)
