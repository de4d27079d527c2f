"""Model distance functions on a common finite support.

All distances take two weight vectors aligned to the same support and are
convex in the first argument. The bootstrap distance is the discrete
relative entropy (KL divergence); the usual 0*log(0) = 0 convention applies.
Pearson and Burg are the classical f-divergences with f(t) = t^2 - 1 and
f(t) = -log(t). A Wasserstein entry exists on the enum surface but is not
implemented: it needs a transport LP and none of the resampling guarantees
in this package apply to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnsupportedDistance

DISTANCE_KINDS = ("bootstrap", "pearson", "burg", "f_divergence", "wasserstein")


def _validate(m, mref):
    m = np.asarray(m, dtype=float)
    mref = np.asarray(mref, dtype=float)
    if m.shape != mref.shape:
        raise ValueError("weight vectors must share a support")
    if np.any(m < 0) or np.any(mref < 0):
        raise ValueError("weights must be nonnegative")
    return m, mref


def bootstrap_distance(m, mref) -> float:
    """Relative entropy sum m log(m/mref), with 0 log 0 = 0.

    The reference must be strictly positive on the support (always true for
    empirical training models), so the result is finite.
    """
    m, mref = _validate(m, mref)
    if np.any(mref <= 0):
        raise ValueError("reference weights must be strictly positive")
    pos = m > 0
    return float(np.sum(m[pos] * np.log(m[pos] / mref[pos])))


def pearson_distance(m, mref) -> float:
    m, mref = _validate(m, mref)
    if np.any(mref <= 0):
        raise ValueError("reference weights must be strictly positive")
    return float(np.sum((m - mref) ** 2 / mref))


def burg_distance(m, mref) -> float:
    """sum mref log(mref/m); +inf when m vanishes where mref does not."""
    m, mref = _validate(m, mref)
    pos = mref > 0
    if np.any(m[pos] <= 0):
        return math.inf
    return float(np.sum(mref[pos] * np.log(mref[pos] / m[pos])))


def f_divergence(f: Callable[[np.ndarray], np.ndarray], m, mref) -> float:
    """sum f(m/mref) mref for convex f with f(1) = 0."""
    m, mref = _validate(m, mref)
    if np.any(mref <= 0):
        raise ValueError("reference weights must be strictly positive")
    return float(np.sum(np.asarray(f(m / mref), dtype=float) * mref))


def table_distance(kind: str, m, mref, f: Callable | None = None) -> float:
    if kind == "bootstrap":
        return bootstrap_distance(m, mref)
    if kind == "pearson":
        return pearson_distance(m, mref)
    if kind == "burg":
        return burg_distance(m, mref)
    if kind == "f_divergence":
        if f is None:
            raise ValueError("f_divergence needs the generator f")
        return f_divergence(f, m, mref)
    if kind == "wasserstein":
        raise UnsupportedDistance(
            "wasserstein model distance is declared but not supported "
            "(needs a transport LP and carries no resampling guarantee)"
        )
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass(frozen=True)
class ModelDistance:
    """A named distance with its evaluation on aligned weight vectors."""

    kind: str
    evaluate: Callable[[np.ndarray, np.ndarray], float]


def model_distance(kind: str, f: Callable | None = None) -> ModelDistance:
    if kind not in DISTANCE_KINDS:
        raise ValueError(f"unknown distance kind {kind!r}; choose from {DISTANCE_KINDS}")
    if kind == "wasserstein":
        def _unsupported(m, mref):
            raise UnsupportedDistance("wasserstein model distance is not supported")
        return ModelDistance(kind, _unsupported)
    return ModelDistance(kind, lambda m, mref: table_distance(kind, m, mref, f=f))
