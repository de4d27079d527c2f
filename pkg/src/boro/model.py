"""Core data types: supervised samples, datasets, empirical models,
contextual label distributions, and loss specifications.

An empirical model is the finitely supported distribution that puts
multiplicity/n mass on each distinct (x, y) pair of a dataset. Distinctness
is exact bitwise equality of coordinates: synthetic continuous data only
collides by construction (resampling), and the multiplicity bookkeeping of
the nearest-neighbors machinery needs exact counting.

All types are immutable values after construction (arrays are marked
read-only); every operation here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SupervisedSample:
    """One covariate-label pair, both real vectors in problem units."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", _frozen(np.atleast_1d(self.y)))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("sample entries must be finite")


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of supervised samples with fixed dimensions."""

    X: np.ndarray  # (n, dim_x)
    Y: np.ndarray  # (n, dim_y)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape[0] == 0 or Y.shape[0] == 0:
            raise ValueError("empty data")
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ValueError("covariates and labels must align row-wise")
        if X.shape[1] < 1 or Y.shape[1] < 1:
            raise ValueError("dimensions must be at least 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim_x(self) -> int:
        return self.X.shape[1]

    @property
    def dim_y(self) -> int:
        return self.Y.shape[1]

    def samples(self) -> Iterator[SupervisedSample]:
        for i in range(self.n):
            yield SupervisedSample(self.X[i], self.Y[i])

    @staticmethod
    def from_samples(samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("empty data")
        return Dataset(
            np.stack([np.atleast_1d(s.x) for s in samples]),
            np.stack([np.atleast_1d(s.y) for s in samples]),
        )


@dataclass(frozen=True)
class EmpiricalModel:
    """Finitely supported distribution over distinct samples.

    ``index`` maps each original dataset row to its support row, which the
    bootstrap harness uses to translate resample draws into weight vectors
    on the shared support.
    """

    xs: np.ndarray    # (s, dim_x) distinct covariates
    ys: np.ndarray    # (s, dim_y) matching labels
    prob: np.ndarray  # (s,) positive weights summing to one
    n: int            # number of underlying samples
    index: np.ndarray | None = None  # (n,) original row -> support row

    def __post_init__(self):
        object.__setattr__(self, "xs", _frozen(self.xs))
        object.__setattr__(self, "ys", _frozen(self.ys))
        object.__setattr__(self, "prob", _frozen(self.prob))
        if self.index is not None:
            idx = np.ascontiguousarray(np.asarray(self.index, dtype=int))
            idx.setflags(write=False)
            object.__setattr__(self, "index", idx)
        if np.any(self.prob <= 0):
            raise ValueError("support weights must be strictly positive")
        if abs(float(self.prob.sum()) - 1.0) > 1e-12:
            raise ValueError("support weights must sum to one")
        if self.xs.shape[0] != self.ys.shape[0] or self.xs.shape[0] != self.prob.size:
            raise ValueError("support arrays must align")
        if self.support_size > self.n:
            raise ValueError("support cannot exceed the sample count")

    @property
    def support_size(self) -> int:
        return self.prob.size

    def label_marginal(self) -> "ContextualDistribution":
        return ContextualDistribution(self.ys, self.prob)


def empirical_model(data: Dataset) -> EmpiricalModel:
    """Group a dataset into its empirical model, weights = multiplicity/n."""
    joined = np.hstack([data.X, data.Y])
    uniq, inverse, counts = np.unique(joined, axis=0, return_inverse=True, return_counts=True)
    dx = data.dim_x
    return EmpiricalModel(
        xs=uniq[:, :dx],
        ys=uniq[:, dx:],
        prob=counts.astype(float) / data.n,
        n=data.n,
        index=inverse,
    )


@dataclass(frozen=True)
class ContextualDistribution:
    """Weighted label distribution produced by a learner at a context."""

    labels: np.ndarray   # (s, dim_y)
    weights: np.ndarray  # (s,) nonnegative, summing to one

    def __post_init__(self):
        labels = np.atleast_2d(np.asarray(self.labels, dtype=float))
        if labels.shape[0] == 1 and np.asarray(self.weights).size > 1:
            labels = labels.T
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "weights", _frozen(np.atleast_1d(self.weights)))
        if self.labels.shape[0] != self.weights.size:
            raise ValueError("labels and weights must align")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-10:
            raise ValueError("weights must sum to one")

    @property
    def size(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.labels


@dataclass(frozen=True)
class LossSpec:
    """Convex loss L(z, y) with a subgradient oracle and a feasible set.

    ``loss`` may return +inf (extended-real); any expectation containing an
    infinite term is +inf. ``project`` is the Euclidean projection onto the
    feasible decision set and must be idempotent. The optional batched
    hooks evaluate over a (s, dim_y) label block for speed; defaults loop.
    """

    dim_z: int
    loss: Callable[[np.ndarray, np.ndarray], float]
    subgradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    project: Callable[[np.ndarray], np.ndarray] = field(default=lambda z: z)
    batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    batch_subgradient: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None

    def losses(self, z: np.ndarray, Y: np.ndarray) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(z, Y), dtype=float)
        return np.array([float(self.loss(z, y)) for y in Y])

    def unconstrained(self) -> bool:
        """True when the feasible projection looks like the identity."""
        probe = np.full(self.dim_z, 0.1234567891)
        try:
            return bool(np.allclose(self.project(probe), probe))
        except Exception:
            return False

    def mean_subgradient(self, z: np.ndarray, Y: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Subgradient of z -> sum_i w_i L(z, y_i)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        w = np.asarray(w, dtype=float)
        if self.batch_subgradient is not None:
            return np.asarray(self.batch_subgradient(z, Y, w), dtype=float)
        g = np.zeros(self.dim_z)
        for wi, y in zip(w, Y):
            if wi > 0:
                g += wi * np.asarray(self.subgradient(z, y), dtype=float)
        return g


def expected_loss(loss: LossSpec, z, dist: ContextualDistribution) -> float:
    """sum_i w_i L(z, y_i); +inf as soon as an infinite loss carries weight."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    vals = loss.losses(z, dist.labels)
    if vals.shape != dist.weights.shape:
        raise ValueError("loss values and weights misaligned")
    active = dist.weights > 0
    if np.any(np.isinf(vals[active])):
        return math.inf
    return float(dist.weights[active] @ vals[active])
