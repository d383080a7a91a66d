"""Sample-based ambiguity sets and distribution separation.

Both ambiguity sets live on the unique observations seen so far:

* moment: distributions matching the sample raw moments of each
  coordinate up to order ``q`` (optionally with second-order cross moments);
* wasserstein: distributions within type-1 Wasserstein distance ``eps``
  (Euclidean ground cost) of the empirical distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import EQ, LE, LpError, LpProblem, LpSettings, solve_lp


@dataclass(frozen=True)
class AmbiguityConfig:
    kind: str = "moment"
    q: int = 2
    eps: float = 1.0
    cross_moments: bool = False

    def __post_init__(self):
        if self.kind not in ("moment", "wasserstein"):
            raise ValueError(f"unknown ambiguity kind {self.kind!r}")
        if self.kind == "moment" and int(self.q) < 1:
            raise ValueError("moment order q must be >= 1")
        if self.eps < 0:
            raise ValueError("Wasserstein radius must be non-negative")

    @classmethod
    def moment(cls, q=2, cross_moments=False):
        return cls("moment", q=q, cross_moments=cross_moments)

    @classmethod
    def wasserstein(cls, eps=1.0):
        return cls("wasserstein", eps=eps)

    def label(self):
        if self.kind == "moment":
            return f"moment(q={self.q})"
        return f"wasserstein(eps={self.eps:g})"


class AmbiguityError(RuntimeError):
    pass


class Sample:
    """Observation history collapsed to unique observations with counts.

    Observations are matched bitwise. ``observe`` updates in place;
    :func:`empirical_update` returns an updated copy.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.k = 0
        self._index = {}
        self._obs = np.empty((16, dim))
        self._counts = np.zeros(16, dtype=np.int64)
        self._n = 0

    @property
    def n_unique(self):
        return self._n

    @property
    def observations(self):
        return self._obs[: self._n]

    @property
    def counts(self):
        return self._counts[: self._n]

    @property
    def frequencies(self):
        return self.counts / self.k

    def index_of(self, omega):
        return self._index.get(np.asarray(omega, dtype=float).tobytes())

    def observe(self, omega) -> tuple[int, bool]:
        """Record one observation; returns (unique index, whether it is new)."""
        omega = np.asarray(omega, dtype=float).ravel()
        key = omega.tobytes()
        self.k += 1
        idx = self._index.get(key)
        if idx is not None:
            self._counts[idx] += 1
            return idx, False
        if self._n == self._obs.shape[0]:
            self._obs = np.vstack([self._obs, np.empty_like(self._obs)])
            self._counts = np.concatenate([self._counts, np.zeros_like(self._counts)])
        idx = self._n
        self._obs[idx] = omega
        self._counts[idx] = 1
        self._index[key] = idx
        self._n += 1
        return idx, True

    def copy(self):
        new = Sample(self.dim)
        new.k = self.k
        new._index = dict(self._index)
        new._obs = self._obs.copy()
        new._counts = self._counts.copy()
        new._n = self._n
        return new

    @classmethod
    def from_observations(cls, observations, dim=None):
        observations = np.asarray(observations, dtype=float)
        if observations.ndim == 1:
            observations = observations[:, None] if dim in (None, 1) else observations.reshape(-1, dim)
        s = cls(observations.shape[1])
        for w in observations:
            s.observe(w)
        return s

    def __repr__(self):
        return f"Sample(k={self.k}, unique={self._n})"


def empirical_update(sample: Sample, omega) -> Sample:
    new = sample.copy()
    new.observe(omega)
    return new


def theta(k: int) -> float:
    if k < 1:
        raise ValueError("iteration index must be >= 1")
    return (k - 1) / k


def theta_map(P: np.ndarray, new_index: int, th: float) -> np.ndarray:
    """Push a distribution on the previous unique set onto the updated set.

    ``new_index`` is the position of the latest observation in the updated
    unique list; when it equals ``len(P)`` the observation is new and the
    result has one more entry.
    """
    P = np.asarray(P, dtype=float)
    n = max(P.size, new_index + 1)
    out = np.zeros(n)
    out[: P.size] = th * P
    out[new_index] += 1.0 - th
    return out


def moment_features(obs: np.ndarray, q: int, cross_moments: bool = False) -> np.ndarray:
    """Feature matrix psi (n, n_features): powers 1..q per coordinate, coordinate-major."""
    obs = np.asarray(obs, dtype=float)
    n, d = obs.shape
    cols = [obs[:, t] ** s for t in range(d) for s in range(1, q + 1)]
    if cross_moments and q >= 2:
        cols += [obs[:, s] * obs[:, t] for s in range(d) for t in range(s + 1, d)]
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def moment_parameters(sample: Sample, q: int, cross_moments: bool = False) -> np.ndarray:
    """Sample raw moments ``(1/k) sum_j psi(w_j)`` over the full history."""
    if sample.k < 1:
        raise ValueError("moment parameters need at least one observation")
    psi = moment_features(sample.observations, q, cross_moments)
    return sample.counts @ psi / sample.k


@dataclass
class ExtremalDistribution:
    weights: np.ndarray
    value: float


def separate(config: AmbiguityConfig, sample: Sample, values, settings: LpSettings = None) -> ExtremalDistribution:
    """Worst-case distribution over the sample-based ambiguity set.

    ``values`` gives one number per unique observation, in sample order.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size != sample.n_unique:
        raise ValueError(f"need {sample.n_unique} values, got {values.size}")
    if config.kind == "moment":
        b_hat = moment_parameters(sample, config.q, config.cross_moments)
        return separate_moment(sample.observations, b_hat, values, config.q, config.cross_moments, settings)
    return separate_wasserstein(sample.observations, sample.frequencies, values, config.eps, settings)


def separate_moment(obs, b_hat, values, q, cross_moments=False, settings=None) -> ExtremalDistribution:
    n = obs.shape[0]
    psi = moment_features(obs, q, cross_moments)
    A = np.vstack([np.ones((1, n)), psi.T])
    rhs = np.concatenate([[1.0], b_hat])
    sol = solve_lp(LpProblem(-values, A, (EQ,) * A.shape[0], rhs), settings)
    if not sol.optimal:
        # the empirical distribution is always feasible
        raise AmbiguityError(f"moment separation LP returned {sol.status.value}")
    return _extremal(sol.x, values)


def transport_costs(obs: np.ndarray) -> np.ndarray:
    diff = obs[:, None, :] - obs[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def separate_wasserstein(obs, p_ref, values, eps, settings=None) -> ExtremalDistribution:
    """max sum p(w) v(w) over p within Wasserstein ``eps`` of ``p_ref``.

    Solved over the transport plan alone: ``eta[i, j]`` moves mass from
    ``p_ref`` at j to i, so ``p_i = sum_j eta[i, j]`` and the objective is
    ``sum_ij v_i eta[i, j]``. Rows are the n marginal constraints on
    ``p_ref`` plus the budget.
    """
    n = obs.shape[0]
    cost = transport_costs(obs)
    A = np.zeros((n + 1, n * n))
    for j in range(n):
        A[j, j::n] = 1.0
    A[n] = cost.ravel()
    rhs = np.concatenate([p_ref, [eps]])
    senses = (EQ,) * n + (LE,)
    c = -np.repeat(values, n)
    sol = solve_lp(LpProblem(c, A, senses, rhs), settings)
    if not sol.optimal:
        raise AmbiguityError(f"Wasserstein separation LP returned {sol.status.value}")
    p = sol.x.reshape(n, n).sum(axis=1)
    return _extremal(p, values)


def _extremal(p, values):
    p = np.where(np.abs(p) < 1e-15, 0.0, p)
    return ExtremalDistribution(weights=p, value=float(p @ values))


def wasserstein_distance(obs, p, p_ref, settings=None) -> float:
    """Type-1 Wasserstein distance between two weightings of the same points."""
    n = obs.shape[0]
    cost = transport_costs(obs)
    A = np.zeros((2 * n, n * n))
    eta = np.arange(n * n).reshape(n, n)
    for i in range(n):
        A[i, eta[i, :]] = 1.0
        A[n + i, eta[:, i]] = 1.0
    rhs = np.concatenate([p, p_ref])
    sol = solve_lp(LpProblem(cost.ravel(), A, (EQ,) * (2 * n), rhs), settings)
    if not sol.optimal:
        raise LpError(f"transport LP returned {sol.status.value}", sol.status)
    return sol.objective
