"""Contextual learners: kernel-weighted (Nadaraya-Watson style) and
k-nearest-neighbors with nested-neighborhood bookkeeping.

Both learners turn an empirical model and a query context into a weighted
label distribution. The kernel learner weighs every support point by its
scaled smoother value; the neighbors learner restricts attention to the
smallest nested neighborhood whose cumulative model mass reaches k/n while
the previous one holds at most (k-1)/n, so duplicated observations are
counted through their weight rather than their index.

Proximity functions may depend on the whole sample (x, y); ties in the base
distance are broken by a total order on samples so the composite key
discriminates distinct support points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyContextWindow, SingularCovariance
from .model import ContextualDistribution, Dataset, EmpiricalModel
from .smoothers import Smoother, smoother_weights


@dataclass(frozen=True)
class ProximityFn:
    """Base distance d((x, y), xbar) >= 0 plus a tie-breaking sample key.

    ``batch`` evaluates the base distance over support arrays; ``tiebreak``
    maps a sample to a sortable tuple. Equal (distance, key) pairs must
    imply identical samples.
    """

    base: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    tiebreak: Callable[[np.ndarray, np.ndarray], tuple]
    batch: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None

    def distances(self, xs: np.ndarray, ys: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(xs, ys, xbar), dtype=float)
        return np.array([float(self.base(x, y, xbar)) for x, y in zip(xs, ys)])


def mahalanobis_proximity(data: Dataset, ridge: float = 0.0) -> ProximityFn:
    """Squared Mahalanobis distance under the empirical covariate covariance.

    The covariance uses the 1/n convention. Ties among equidistant points
    are broken lexicographically by label then covariate vector. A singular
    covariance raises; pass ``ridge`` > 0 to regularize with ridge * I.
    """
    mu = np.mean(data.X, axis=0)
    centered = data.X - mu
    cov = centered.T @ centered / data.n
    if ridge > 0:
        cov = cov + ridge * np.eye(cov.shape[0])
    try:
        cov_inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            "empirical covariate covariance is singular; "
            "regularize with a small ridge epsilon * I"
        ) from None
    if not np.all(np.isfinite(cov_inv)) or np.linalg.cond(cov) > 1e12:
        raise SingularCovariance(
            "empirical covariate covariance is numerically singular; "
            "regularize with a small ridge epsilon * I"
        )

    def base(x, y, xbar):
        d = np.atleast_1d(x) - np.atleast_1d(xbar)
        return float(d @ cov_inv @ d)

    def batch(xs, ys, xbar):
        d = np.atleast_2d(xs) - np.atleast_1d(xbar)[None, :]
        return np.einsum("ij,jk,ik->i", d, cov_inv, d)

    def tiebreak(x, y):
        return tuple(np.atleast_1d(y)) + tuple(np.atleast_1d(x))

    return ProximityFn(base=base, tiebreak=tiebreak, batch=batch)


@dataclass(frozen=True)
class NeighborhoodChain:
    """Support indices ordered by (distance, tiebreak) with prefix masses.

    ``order[:j]`` is the j-th neighborhood; the zeroth is empty. ``cum``
    has length s+1 with cum[j] the model mass of the j-th prefix.
    """

    order: np.ndarray      # (s,) permutation of support indices
    distances: np.ndarray  # (s,) sorted base distances
    cum: np.ndarray        # (s+1,) prefix model mass, cum[0] = 0

    @property
    def size(self) -> int:
        return self.order.size

    def prefix(self, j: int) -> np.ndarray:
        return self.order[:j]

    def prefix_mass(self, weights: np.ndarray) -> np.ndarray:
        """Prefix masses of an arbitrary weight vector on the same support."""
        out = np.zeros(self.size + 1)
        out[1:] = np.cumsum(np.asarray(weights, dtype=float)[self.order])
        return out


def build_neighborhoods(prox: ProximityFn, model: EmpiricalModel, xbar) -> NeighborhoodChain:
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    d = prox.distances(model.xs, model.ys, xbar)
    keys = [prox.tiebreak(x, y) for x, y in zip(model.xs, model.ys)]
    key_arr = np.array(keys, dtype=float)
    if key_arr.ndim == 1:
        key_arr = key_arr[:, None]
    # np.lexsort sorts by the last key first, so distance goes last
    order = np.lexsort(tuple(key_arr[:, i] for i in range(key_arr.shape[1] - 1, -1, -1)) + (d,))
    composite = np.column_stack([d[order], key_arr[order]])
    if any(np.array_equal(composite[i], composite[i + 1]) for i in range(len(order) - 1)):
        raise ValueError("proximity function fails to discriminate distinct support points")
    cum = np.zeros(order.size + 1)
    cum[1:] = np.cumsum(model.prob[order])
    return NeighborhoodChain(order=order, distances=d[order], cum=cum)


@dataclass(frozen=True)
class NwLearner:
    """Kernel-weighted contextual learner."""

    smoother: Smoother
    bandwidth: float

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class NnLearner:
    """k-nearest-neighbors contextual learner with in-window smoothing."""

    smoother: Smoother
    bandwidth: float
    k: int
    proximity: ProximityFn

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")


Learner = NwLearner | NnLearner


def nw_contextualize(learner: NwLearner, model: EmpiricalModel, xbar) -> ContextualDistribution:
    """Labels weighted by smoother value times model weight, normalized.

    Raises EmptyContextWindow when every smoother weight vanishes at the
    context (possible with compact-support smoothers).
    """
    s = smoother_weights(learner.smoother, learner.bandwidth, model.xs, xbar)
    raw = s * model.prob
    total = float(raw.sum())
    if total <= 0:
        raise EmptyContextWindow("empty context window")
    return ContextualDistribution(model.ys, raw / total)


def select_neighborhood(chain: NeighborhoodChain, k: int, n: int,
                        weights: np.ndarray | None = None,
                        mass_tol: float = 1e-12) -> int:
    """Index j of the active neighborhood for weights on the chain support.

    j is the unique prefix whose mass reaches k/n while the previous prefix
    carries at most (k-1)/n. Existence holds for any weight vector whose
    prefix masses are multiples of 1/n (every empirical model); other
    vectors may not admit a valid j, which raises.
    """
    if k > n:
        raise ValueError("k cannot exceed the sample count")
    cum = chain.cum if weights is None else chain.prefix_mass(weights)
    lo, hi = (k - 1) / n, k / n
    for j in range(1, chain.size + 1):
        if cum[j] >= hi - mass_tol and cum[j - 1] <= lo + mass_tol:
            return j
    raise ValueError("no valid neighborhood index for these weights")


def nn_contextualize(
    learner: NnLearner,
    model: EmpiricalModel,
    xbar,
    j: int | None = None,
    mass_tol: float = 1e-12,
) -> ContextualDistribution:
    """Smoother-weighted labels restricted to the active neighborhood.

    Pass ``j`` to bypass the mass-based selection (used when re-evaluating
    adversarial reweightings whose neighborhood index is already known).
    """
    if learner.k > model.n:
        raise ValueError("k cannot exceed the sample count")
    chain = build_neighborhoods(learner.proximity, model, xbar)
    if j is None:
        j = select_neighborhood(chain, learner.k, model.n, mass_tol=mass_tol)
    idx = chain.prefix(j)
    s = smoother_weights(learner.smoother, learner.bandwidth, model.xs[idx], xbar)
    raw = s * model.prob[idx]
    total = float(raw.sum())
    if total <= 0:
        raise EmptyContextWindow("empty context window")
    return ContextualDistribution(model.ys[idx], raw / total)


def contextualize(learner: Learner, model: EmpiricalModel, xbar) -> ContextualDistribution:
    if isinstance(learner, NwLearner):
        return nw_contextualize(learner, model, xbar)
    if isinstance(learner, NnLearner):
        return nn_contextualize(learner, model, xbar)
    raise TypeError(f"unknown learner type {type(learner).__name__}")
