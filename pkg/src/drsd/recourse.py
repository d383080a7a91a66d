"""Second-stage solves and the dual-vertex lower approximation of Q."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import EQ, LpProblem, LpSettings, Status, solve_lp
from .model import ProblemInstance, realize, realize_batch

DUAL_FEAS_TOL = 1e-8


class RecourseError(RuntimeError):
    """Second stage infeasible or unbounded: relatively complete recourse fails."""

    def __init__(self, message, x=None, omega=None, status=None):
        super().__init__(message)
        self.x = x
        self.omega = omega
        self.status = status


def solve_subproblem(inst: ProblemInstance, x, omega, settings: LpSettings = None):
    """Exact ``Q(x, w)`` and an optimal dual vertex ``pi``."""
    x = np.asarray(x, dtype=float)
    r, T = realize(inst, omega)
    rhs = r - T @ x
    sol = solve_lp(LpProblem(inst.g, inst.W, (EQ,) * inst.m, rhs), settings)
    if sol.status is not Status.OPTIMAL:
        raise RecourseError(
            f"second-stage LP is {sol.status.value} at x={x.tolist()}, omega={np.asarray(omega).tolist()}; "
            "the instance violates relatively complete recourse",
            x=x, omega=omega, status=sol.status)
    return sol.objective, sol.duals


class DualVertexSet:
    """Growing list of dual vertices, starting from the zero vector."""

    def __init__(self, W, g, tol: float = 1e-9):
        self.W = np.asarray(W, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.tol = tol
        m = self.W.shape[0]
        self._pis = np.zeros((8, m))
        self._n = 1

    @classmethod
    def for_instance(cls, inst: ProblemInstance, tol: float = 1e-9):
        return cls(inst.W, inst.g, tol)

    def __len__(self):
        return self._n

    @property
    def vertices(self):
        return self._pis[: self._n]

    def add(self, pi) -> int:
        """Insert ``pi`` unless an existing member is within ``tol``; returns its index."""
        pi = np.asarray(pi, dtype=float).ravel()
        slack = self.W.T @ pi - self.g
        if np.max(slack, initial=-np.inf) > DUAL_FEAS_TOL:
            raise ValueError(f"vector is not dual feasible (max violation {slack.max():.3g})")
        dist = np.max(np.abs(self.vertices - pi), axis=1)
        hit = int(np.argmin(dist))
        if dist[hit] <= self.tol:
            return hit
        if self._n == self._pis.shape[0]:
            self._pis = np.vstack([self._pis, np.zeros_like(self._pis)])
        self._pis[self._n] = pi
        self._n += 1
        return self._n - 1

    def copy(self):
        new = DualVertexSet(self.W, self.g, self.tol)
        new._pis = self._pis.copy()
        new._n = self._n
        return new


def add_vertex(pis: DualVertexSet, pi) -> DualVertexSet:
    new = pis.copy()
    new.add(pi)
    return new


def argmax_dual(pis: DualVertexSet, x, omega, inst: ProblemInstance):
    """Best stored vertex for ``(x, w)``; ties go to the earliest vertex."""
    r, T = realize(inst, omega)
    scores = pis.vertices @ (r - T @ np.asarray(x, dtype=float))
    j = int(np.argmax(scores))
    return pis.vertices[j].copy(), float(scores[j])


@dataclass
class RecourseEvaluation:
    values: np.ndarray
    indices: np.ndarray


def rhs_batch(R: np.ndarray, Ts: np.ndarray, x) -> np.ndarray:
    """``r(w) - T(w) x`` for stacked scenario data."""
    return R - Ts @ np.asarray(x, dtype=float)


def eval_recourse_approx(pis: DualVertexSet, x, obs, inst: ProblemInstance = None, R=None, Ts=None):
    """``Q^k(x, w)`` for every observation via argmax; no LP solves.

    Either pass the instance (scenario data is realized here) or
    precomputed ``R``/``Ts`` from :func:`realize_batch`.
    """
    if R is None:
        R, Ts = realize_batch(inst, obs)
    H = rhs_batch(R, Ts, x)
    scores = H @ pis.vertices.T
    idx = np.argmax(scores, axis=1)
    return RecourseEvaluation(values=scores[np.arange(idx.size), idx], indices=idx)
