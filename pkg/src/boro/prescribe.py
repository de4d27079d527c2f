"""Nominal prescriptions: minimize the expected contextual loss.

The sample-average prescription works off the label marginal; the learner
prescriptions work off the learner's contextual distribution at the query
context. Ties in flat argmin regions are resolved by whichever minimizer
the search finds first; compare costs, not decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SolveSettings, minimize_convex
from .learners import Learner, NnLearner, contextualize
from .model import ContextualDistribution, Dataset, EmpiricalModel, LossSpec, expected_loss


@dataclass(frozen=True)
class Prescription:
    """A decision with its budgeted training cost and solver diagnostics."""

    z: np.ndarray
    cost: float
    iterations: int = 0
    final_step: float = 0.0
    status: str = "converged"
    radius: float | None = None
    active_j: int | None = None


def _minimize_expected(loss: LossSpec, dist: ContextualDistribution,
                       settings: SolveSettings | None, seed: int, z0) -> Prescription:
    settings = settings or SolveSettings()

    def objective(z):
        val = expected_loss(loss, z, dist)
        g = loss.mean_subgradient(z, dist.labels, dist.weights)
        return val, g

    if z0 is None:
        z0 = loss.project(np.zeros(loss.dim_z))
    project = None if loss.dim_z == 1 and loss.unconstrained() else loss.project
    res = minimize_convex(objective, z0, project=project, settings=settings, seed=seed)
    return Prescription(z=res.x, cost=res.value, iterations=res.iterations,
                        final_step=res.final_step, status=res.status)


def saa_prescribe(loss: LossSpec, labels, settings: SolveSettings | None = None,
                  seed: int = 0, z0=None) -> Prescription:
    """Minimize the average loss over the raw training labels."""
    if isinstance(labels, Dataset):
        labels = labels.Y
    Y = np.atleast_2d(np.asarray(labels, dtype=float))
    if Y.shape[0] == 0:
        raise ValueError("empty data")
    if Y.shape[0] == 1 and Y.shape[1] > 1 and loss.dim_z == 1:
        Y = Y.T
    w = np.full(Y.shape[0], 1.0 / Y.shape[0])
    return _minimize_expected(loss, ContextualDistribution(Y, w), settings, seed, z0)


def nominal_contextual_cost(learner: Learner, loss: LossSpec, model: EmpiricalModel,
                            xbar, z) -> float:
    """Expected loss of z under the learner's contextual distribution."""
    return expected_loss(loss, z, contextualize(learner, model, xbar))


def nominal_prescribe(learner: Learner, loss: LossSpec, model: EmpiricalModel, xbar,
                      settings: SolveSettings | None = None, seed: int = 0,
                      z0=None) -> Prescription:
    """Minimize the predicted contextual cost at the query context."""
    dist = contextualize(learner, model, xbar)
    p = _minimize_expected(loss, dist, settings, seed, z0)
    active_j = None
    if isinstance(learner, NnLearner):
        from .learners import build_neighborhoods, select_neighborhood

        chain = build_neighborhoods(learner.proximity, model, xbar)
        active_j = select_neighborhood(chain, learner.k, model.n)
    return Prescription(z=p.z, cost=p.cost, iterations=p.iterations, final_step=p.final_step,
                        status=p.status, active_j=active_j)
