"""Resampling and empirical disappointment estimation.

A prescription "disappoints" on a resample when the nominal contextual cost
of its decision, evaluated on the resampled empirical model, exceeds the
budgeted training cost. The harness draws resamples with a counter-keyed
generator per resample index, so results are reproducible regardless of
evaluation order or parallelism, and evaluates all resamples through one
vectorized pass on the shared training support (resampled weights live on a
subset of the training support by construction).

Resamples whose context window is empty (possible with compact-support
smoothers) are counted as disappointments, on the grounds that an undefined
out-of-sample cost is not a success; their frequency is reported separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .learners import NnLearner, NwLearner, build_neighborhoods
from .model import Dataset, EmpiricalModel, LossSpec, empirical_model
from .prescribe import Prescription
from .robust import MinRadii, nn_disappointment_bound
from .smoothers import smoother_weights


@dataclass(frozen=True)
class BootstrapPlan:
    """How many resamples to draw and from which seed."""

    m: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one resample")


@dataclass(frozen=True)
class DisappointmentReport:
    empirical_b: float
    bound_b: float | None
    m: int
    seed: int
    empty_window_fraction: float = 0.0
    costs: np.ndarray | None = None  # per-resample nominal costs (nan = empty window)


def _resample_rng(seed: int, i: int) -> np.random.Generator:
    # counter-keyed stream: independent of evaluation order
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))


def resample(data: Dataset, seed: int, index: int = 0) -> Dataset:
    """n i.i.d. uniform draws with replacement from the training rows."""
    rng = _resample_rng(seed, index)
    rows = rng.integers(0, data.n, size=data.n)
    return Dataset(data.X[rows], data.Y[rows])


def _resample_counts(data: Dataset, model: EmpiricalModel, plan: BootstrapPlan) -> np.ndarray:
    """(m, support) matrix of resample multiplicities on the training support."""
    if model.index is None:
        raise ValueError("model must carry its sample-to-support index")
    counts = np.zeros((plan.m, model.support_size), dtype=np.int64)
    for i in range(plan.m):
        rows = _resample_rng(plan.seed, i).integers(0, data.n, size=data.n)
        counts[i] = np.bincount(model.index[rows], minlength=model.support_size)
    return counts


def nominal_costs_on_resamples(
    learner: NwLearner | NnLearner,
    loss: LossSpec,
    data: Dataset,
    xbar,
    z,
    plan: BootstrapPlan,
) -> np.ndarray:
    """Nominal contextual cost of z on every resampled empirical model.

    Entries are nan where the resample leaves the context window empty.
    """
    model = empirical_model(data)
    counts = _resample_counts(data, model, plan)
    s_w = smoother_weights(learner.smoother, learner.bandwidth, model.xs, xbar)
    ell = loss.losses(np.atleast_1d(np.asarray(z, dtype=float)), model.ys)

    if isinstance(learner, NwLearner):
        num = counts @ (s_w * ell)
        den = counts @ s_w
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / den, np.nan)
        return out

    chain = build_neighborhoods(learner.proximity, model, xbar)
    order = chain.order
    c_sorted = counts[:, order]
    cum = np.cumsum(c_sorted, axis=1)
    # smallest prefix reaching k draws; integer masses make the (k-1)-side
    # condition automatic
    j_idx = np.argmax(cum >= learner.k, axis=1)  # first True per row
    num_cum = np.cumsum(c_sorted * (s_w[order] * ell[order])[None, :], axis=1)
    den_cum = np.cumsum(c_sorted * s_w[order][None, :], axis=1)
    rows = np.arange(counts.shape[0])
    num = num_cum[rows, j_idx]
    den = den_cum[rows, j_idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def estimate_disappointment(
    prescription: Prescription,
    learner: NwLearner | NnLearner,
    loss: LossSpec,
    data: Dataset,
    xbar,
    plan: BootstrapPlan,
    bound_b: float | None = None,
    keep_costs: bool = False,
) -> DisappointmentReport:
    """Fraction of resamples whose nominal cost exceeds the budgeted cost."""
    budget = prescription.cost
    costs = nominal_costs_on_resamples(learner, loss, data, xbar, prescription.z, plan)
    empty = np.isnan(costs)
    disappointed = empty | (costs > budget)
    return DisappointmentReport(
        empirical_b=float(np.mean(disappointed)),
        bound_b=bound_b,
        m=plan.m,
        seed=plan.seed,
        empty_window_fraction=float(np.mean(empty)),
        costs=costs if keep_costs else None,
    )


def bound_curve(formulation: str, r: float, n: int, radii: MinRadii | None = None) -> float:
    """Theoretical disappointment bound at radius r.

    Kernel formulation: exp(-n r). Neighbors formulation: the per-index sum
    exp(-n max(r, r_j*)) over the minimum radii.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if formulation == "nw":
        return math.exp(-n * r)
    if formulation == "nn":
        if radii is None:
            raise ValueError("the neighbors bound needs the minimum radii")
        return nn_disappointment_bound(r, n, radii)
    raise ValueError(f"unknown formulation {formulation!r}")
