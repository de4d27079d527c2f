"""Desk-scale reproduction of the two case studies.

Newsvendor: order z against uncertain demand with back-order cost b = 10
and holding cost h = 1 per unit; covariates are outside temperature and a
weekend flag, and the canonical query context is (15 C, Friday). Demand is
conditionally Gaussian with mean 100 + (t - 20) + 20 * weekend.

Portfolio: split a unit budget over six securities, trading mean return
against the conditional value-at-risk of losses at level eps = 0.05 with
weight lambda = 1. Covariates are an equity index level, inflation, and a
log-scaled conflict-chatter indicator; the canonical query context is
(970, 0, 10).

Second parameters of the Gaussian laws are read as variances by default
(the "variance" convention); pass convention="std" to read them as
standard deviations instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import SolveSettings, project_simplex
from .learners import Learner, NnLearner, NwLearner, contextualize, mahalanobis_proximity
from .model import ContextualDistribution, Dataset, EmpiricalModel, LossSpec, empirical_model
from .smoothers import bandwidth_rule_of_thumb, get_smoother

# ---------------------------------------------------------------------------
# Newsvendor pieces
# ---------------------------------------------------------------------------

NEWSVENDOR_CONTEXT = np.array([15.0, 0.0])  # 15 C, Friday (not a weekend)


@dataclass(frozen=True)
class NewsvendorSpec:
    b_cost: float = 10.0  # USD per unit of unmet demand
    h_cost: float = 1.0   # USD per unit held over

    def __post_init__(self):
        if self.b_cost <= 0 or self.h_cost <= 0:
            raise ValueError("unit costs must be positive")

    @property
    def quantile(self) -> float:
        return self.b_cost / (self.b_cost + self.h_cost)


def newsvendor_loss(b: float = 10.0, h: float = 1.0) -> LossSpec:
    """L(z, y) = b (y - z)+ + h (z - y)+ on scalar decisions."""

    def loss_fn(z, y):
        d = float(y[0]) - float(z[0])
        return b * max(d, 0.0) + h * max(-d, 0.0)

    def subgrad(z, y):
        # kink convention: report the left element -b at z == y
        return np.array([h if float(z[0]) > float(y[0]) else -b])

    def batch(z, Y):
        d = Y[:, 0] - z[0]
        return b * np.maximum(d, 0.0) + h * np.maximum(-d, 0.0)

    def batch_subgrad(z, Y, w):
        over = float(np.sum(w[Y[:, 0] < z[0]]))
        under_or_tie = float(np.sum(w[Y[:, 0] >= z[0]]))
        return np.array([h * over - b * under_or_tie])

    return LossSpec(dim_z=1, loss=loss_fn, subgradient=subgrad,
                    batch=batch, batch_subgradient=batch_subgrad)


def newsvendor_oracle_quantile(dist: ContextualDistribution, b: float = 10.0,
                               h: float = 1.0) -> float:
    """Smallest label whose cumulative weight reaches b / (b + h)."""
    if dist.size == 0:
        raise ValueError("empty distribution")
    vals = dist.labels[:, 0]
    order = np.argsort(vals, kind="stable")
    cum = np.cumsum(dist.weights[order])
    target = b / (b + h)
    pos = int(np.searchsorted(cum, target - 1e-12))
    pos = min(pos, vals.size - 1)
    return float(vals[order][pos])


@dataclass(frozen=True)
class NewsvendorModel:
    """Synthetic demand generator with temperature and day-of-week effects."""

    base: float = 100.0
    temp_ref: float = 20.0
    weekend_lift: float = 20.0
    demand_spread: float = 16.0
    temp_mean: float = 20.0
    temp_spread: float = 4.0
    convention: str = "variance"

    def _std(self, spread: float) -> float:
        if self.convention == "variance":
            return math.sqrt(spread)
        if self.convention == "std":
            return float(spread)
        raise ValueError("convention must be 'variance' or 'std'")

    def conditional_mean(self, xbar) -> float:
        t, weekend = float(xbar[0]), float(xbar[1])
        return self.base + (t - self.temp_ref) + self.weekend_lift * (weekend > 0.5)

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        temp = rng.normal(self.temp_mean, self._std(self.temp_spread), size=n)
        day = rng.integers(0, 7, size=n)  # 0 = Monday ... 6 = Sunday
        weekend = (day >= 5).astype(float)
        mean = self.base + (temp - self.temp_ref) + self.weekend_lift * weekend
        demand = rng.normal(mean, self._std(self.demand_spread))
        return Dataset(np.column_stack([temp, weekend]), demand[:, None])

    def sample_labels(self, xbar, size: int, rng: np.random.Generator) -> np.ndarray:
        mean = self.conditional_mean(xbar)
        return rng.normal(mean, self._std(self.demand_spread), size=size)[:, None]


# ---------------------------------------------------------------------------
# Portfolio pieces
# ---------------------------------------------------------------------------

PORTFOLIO_CONTEXT = np.array([970.0, 0.0, 10.0])

PORTFOLIO_MEAN = np.array([86.8625, 71.6059, 75.3759, 97.6258, 52.7854, 84.8973])

# lower-triangular factor of the return covariance (suppressed entries zero)
PORTFOLIO_SQRT_COV = np.array([
    [136.687, 0.0, 0.0, 0.0, 0.0, 0.0],
    [8.79766, 142.279, 0.0, 0.0, 0.0, 0.0],
    [16.1504, 15.0637, 122.613, 0.0, 0.0, 0.0],
    [18.4944, 15.6961, 26.344, 139.148, 0.0, 0.0],
    [3.41394, 16.5922, 14.8795, 13.9914, 151.732, 0.0],
    [24.8156, 18.7292, 17.1574, 6.36536, 24.7703, 144.672],
])


@dataclass(frozen=True)
class PortfolioSpec:
    eps: float = 0.05
    lam: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def portfolio_loss(eps: float = 0.05, lam: float = 1.0) -> LossSpec:
    """Tail-risk/return trade-off over the joint decision (weights, beta).

    L(z, beta, y) = beta + (1/eps) (-z'y - beta)+ - lam * z'y with the six
    portfolio weights confined to the probability simplex and beta free.
    """
    n_assets = PORTFOLIO_MEAN.size

    def split(zb):
        return zb[:n_assets], float(zb[n_assets])

    def loss_fn(zb, y):
        z, beta = split(zb)
        zy = float(z @ y)
        return beta + max(-zy - beta, 0.0) / eps - lam * zy

    def subgrad(zb, y):
        z, beta = split(zb)
        zy = float(z @ y)
        hinge = 1.0 if (-zy - beta) > 0 else 0.0
        gz = -(hinge / eps + lam) * np.asarray(y, dtype=float)
        gb = 1.0 - hinge / eps
        return np.concatenate([gz, [gb]])

    def batch(zb, Y):
        z, beta = split(zb)
        zy = Y @ z
        return beta + np.maximum(-zy - beta, 0.0) / eps - lam * zy

    def batch_subgrad(zb, Y, w):
        z, beta = split(zb)
        zy = Y @ z
        hinge = ((-zy - beta) > 0).astype(float)
        coeff = w * (hinge / eps + lam)
        gz = -(coeff @ Y)
        gb = float(np.sum(w) - np.sum(w * hinge) / eps)
        return np.concatenate([gz, [gb]])

    def project(zb):
        out = np.asarray(zb, dtype=float).copy()
        out[:n_assets] = project_simplex(out[:n_assets])
        return out

    return LossSpec(dim_z=n_assets + 1, loss=loss_fn, subgradient=subgrad, project=project,
                    batch=batch, batch_subgradient=batch_subgrad)


@dataclass(frozen=True)
class PortfolioModel:
    """Synthetic six-asset return generator driven by three covariates."""

    mean: np.ndarray = field(default_factory=lambda: PORTFOLIO_MEAN.copy())
    sqrt_cov: np.ndarray = field(default_factory=lambda: PORTFOLIO_SQRT_COV.copy())
    index_mean: float = 1000.0
    index_spread: float = 50.0
    inflation_mean: float = 0.02
    inflation_spread: float = 0.01
    convention: str = "variance"

    def _std(self, spread: float) -> float:
        if self.convention == "variance":
            return math.sqrt(spread)
        if self.convention == "std":
            return float(spread)
        raise ValueError("convention must be 'variance' or 'std'")

    def conditional_mean(self, xbar) -> np.ndarray:
        sap, infl, logwar = (float(v) for v in xbar)
        shift = 0.1 * (sap - 1000.0) + 1000.0 * infl + 10.0 * np.logaddexp(0.0, logwar)
        return self.mean + shift

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        sap = rng.normal(self.index_mean, self._std(self.index_spread), size=n)
        infl = rng.normal(self.inflation_mean, self._std(self.inflation_spread), size=n)
        logwar = rng.normal(0.0, 1.0, size=n)
        X = np.column_stack([sap, infl, logwar])
        noise = rng.standard_normal((n, self.mean.size))
        Y = np.array([self.conditional_mean(x) for x in X]) + noise @ self.sqrt_cov.T
        return Dataset(X, Y)

    def sample_labels(self, xbar, size: int, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((size, self.mean.size))
        return self.conditional_mean(xbar)[None, :] + noise @ self.sqrt_cov.T


# ---------------------------------------------------------------------------
# Hyperparameter cross-validation
# ---------------------------------------------------------------------------


def cross_validate(
    family: str,
    data: Dataset,
    folds: int = 10,
    smoother: str | None = None,
    h_grid=None,
    k_grid=None,
    seed: int = 0,
) -> tuple[float, int | None]:
    """Grid-search the bandwidth (and k) by held-out squared prediction loss.

    Scores the squared distance between the contextual mean and the held-out
    label, averaged over folds. Grid points whose window comes up empty on
    every held-out sample are dropped; leave-one-out (folds == n) is out of
    scope.
    """
    if family not in ("nw", "nn"):
        raise ValueError("family must be 'nw' or 'nn'")
    if folds >= data.n:
        raise ValueError("folds must be smaller than the sample count (no leave-one-out)")
    if folds < 2:
        raise ValueError("need at least two folds")
    smoother_obj = get_smoother(smoother or ("gaussian" if family == "nw" else "naive"))
    h0 = bandwidth_rule_of_thumb(data)
    if h_grid is None:
        h_grid = [m * h0 for m in (0.25, 0.5, 1.0, 2.0, 4.0)]
    if family == "nn":
        root_k = max(1, round(math.sqrt(data.n)))
        if k_grid is None:
            k_grid = sorted({1, max(1, root_k // 2), root_k, min(data.n, 2 * root_k)})
        elif root_k not in k_grid:
            raise ValueError("the k grid must include round(sqrt(n))")
        grid = [(h, k) for h in h_grid for k in k_grid]
    else:
        grid = [(h, None) for h in h_grid]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    fold_ids = np.array_split(perm, folds)

    scores = []
    for h, k in grid:
        errs = []
        dropped = False
        for held in fold_ids:
            mask = np.ones(data.n, dtype=bool)
            mask[held] = False
            train = Dataset(data.X[mask], data.Y[mask])
            model = empirical_model(train)
            if family == "nw":
                learner: Learner = NwLearner(smoother_obj, h)
            else:
                kk = min(k, train.n)
                learner = NnLearner(smoother_obj, h, kk, mahalanobis_proximity(train))
            fold_errs = []
            for i in held:
                try:
                    pred = contextualize(learner, model, data.X[i]).mean()
                except Exception:
                    continue
                fold_errs.append(float(np.sum((pred - data.Y[i]) ** 2)))
            if not fold_errs:
                dropped = True
                break
            errs.append(float(np.mean(fold_errs)))
        scores.append(math.inf if dropped else float(np.mean(errs)))
    best = int(np.argmin(scores))
    if not math.isfinite(scores[best]):
        raise ValueError("every grid point left the context window empty")
    return grid[best]


# ---------------------------------------------------------------------------
# Out-of-sample evaluation
# ---------------------------------------------------------------------------


def out_of_sample_eval(
    z,
    learner: Learner,
    loss: LossSpec,
    generator,
    xbar,
    test_sets: int,
    size: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean (and standard error) over synthetic test sets of the nominal
    contextual cost of a fixed decision."""
    from .model import expected_loss

    costs = np.empty(test_sets)
    for t in range(test_sets):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))
        test = generator.sample(size, rng)
        model = empirical_model(test)
        dist = contextualize(learner, model, xbar)
        costs[t] = expected_loss(loss, np.atleast_1d(z), dist)
    se = float(np.std(costs, ddof=1) / math.sqrt(test_sets)) if test_sets > 1 else 0.0
    return float(np.mean(costs)), se


# ---------------------------------------------------------------------------
# Experiment runners (figure-style sweeps at desk scale)
# ---------------------------------------------------------------------------


def build_learner(
    family: str,
    data: Dataset,
    smoother: str | None = None,
    bandwidth: float | None = None,
    k: int | None = None,
) -> Learner:
    """Learner with the conventional defaults: Gaussian smoother for the
    kernel learner, naive smoother with a Mahalanobis metric and
    k = round(sqrt(n)) for the neighbors learner, bandwidth by rule of
    thumb unless given."""
    h = bandwidth if bandwidth is not None else bandwidth_rule_of_thumb(data)
    if family == "nw":
        return NwLearner(get_smoother(smoother or "gaussian"), h)
    if family == "nn":
        kk = k if k is not None else max(1, round(math.sqrt(data.n)))
        return NnLearner(get_smoother(smoother or "naive"), h, kk, mahalanobis_proximity(data))
    raise ValueError("family must be 'nw' or 'nn'")


def _cell_rng(base_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(key)))


def _run_cells(cells, threads: int | None):
    import concurrent.futures as cf
    import os

    workers = threads if threads else (os.cpu_count() or 1)
    if workers <= 1 or len(cells) <= 1:
        return [cell() for cell in cells]
    with cf.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: c(), cells))


def run_newsvendor_experiment(
    n_grid,
    r_grid=None,
    target_b: float = 0.1,
    m: int = 2000,
    seeds: int = 2,
    learners=("nw", "nn"),
    smoother: str | None = None,
    bandwidth: float | None = None,
    k: int | None = None,
    variance_convention: str = "variance",
    seed: int = 0,
    threads: int | None = None,
):
    """Disappointment-versus-n sweep on the synthetic demand model.

    Emits one table per (learner, nominal/robust) panel with columns
    n, r, empirical_b, bound_b, m, seed. Robust rows calibrate the radius
    from ``target_b`` unless an explicit radius grid is given.
    """
    from .bootstrap import BootstrapPlan, bound_curve, estimate_disappointment
    from .learners import build_neighborhoods
    from .prescribe import nominal_prescribe
    from .robust import RobustConfig, calibrate_radius_nn, min_radii, robust_prescribe

    gen = NewsvendorModel(convention=variance_convention)
    loss = newsvendor_loss()
    xbar = NEWSVENDOR_CONTEXT

    def make_cell(family, n, s_idx):
        def cell():
            rng = _cell_rng(seed, 0 if family == "nw" else 1, n, s_idx)
            data = gen.sample(n, rng)
            model = empirical_model(data)
            learner = build_learner(family, data, smoother=smoother, bandwidth=bandwidth, k=k)
            plan = BootstrapPlan(m=m, seed=seed + 7919 * s_idx + n)
            rows_nom, rows_rob = [], []

            nom = nominal_prescribe(learner, loss, model, xbar)
            rep = estimate_disappointment(nom, learner, loss, data, xbar, plan, bound_b=1.0)
            rows_nom.append(dict(n=n, r=0.0, empirical_b=rep.empirical_b, bound_b=1.0,
                                 m=m, seed=s_idx))

            if family == "nn":
                chain = build_neighborhoods(learner.proximity, model, xbar)
                radii = min_radii(model, chain, learner.k)
            else:
                radii = None
            if r_grid is not None:
                r_list = list(r_grid)
            elif family == "nw":
                r_list = [math.log(1.0 / target_b) / n]
            else:
                r_list = [calibrate_radius_nn(target_b, n, radii)]
            for r in r_list:
                rob = robust_prescribe(RobustConfig(radius=r), learner, loss, model, xbar)
                bb = bound_curve(family, r, n, radii)
                repr_ = estimate_disappointment(rob, learner, loss, data, xbar, plan, bound_b=bb)
                rows_rob.append(dict(n=n, r=r, empirical_b=repr_.empirical_b, bound_b=bb,
                                     m=m, seed=s_idx))
            return family, rows_nom, rows_rob
        return cell

    cells = [make_cell(f, n, s) for f in learners for n in n_grid for s in range(seeds)]
    results = _run_cells(cells, threads)

    tables: dict[str, list[dict]] = {}
    for family in learners:
        tables[f"newsvendor_{family}_nominal"] = []
        tables[f"newsvendor_{family}_robust"] = []
    for family, rows_nom, rows_rob in results:
        tables[f"newsvendor_{family}_nominal"].extend(rows_nom)
        tables[f"newsvendor_{family}_robust"].extend(rows_rob)
    for t in tables.values():
        t.sort(key=lambda row: (row["n"], row["r"], row["seed"]))
    manifest = {
        "experiment": "newsvendor",
        "columns": ["n", "r", "empirical_b", "bound_b", "m", "seed"],
        "context": list(map(float, xbar)),
        "seeds": list(range(seeds)),
        "base_seed": seed,
        "m": m,
        "target_b": None if r_grid is not None else target_b,
        "r_grid": list(r_grid) if r_grid is not None else None,
        "variance_convention": variance_convention,
    }
    return tables, manifest


def run_portfolio_experiment(
    n_grid,
    target_b: float = 0.01,
    seeds: int = 10,
    test_sets: int = 200,
    test_size: int = 200,
    learners=("nw",),
    smoother: str | None = None,
    bandwidth: float | None = None,
    k: int | None = None,
    variance_convention: str = "variance",
    seed: int = 0,
    threads: int | None = None,
    max_iter: int = 3000,
):
    """Out-of-sample cost versus n for nominal and robust allocations.

    One table per (learner, nominal/robust) panel, columns n, seed,
    oos_cost, oos_se, train_cost, radius. Nominal and robust rows of the
    same (n, seed) share the training data and the test sets.
    """
    from .engine import SolveSettings
    from .prescribe import nominal_prescribe
    from .robust import RobustConfig, robust_prescribe

    gen = PortfolioModel(convention=variance_convention)
    spec = PortfolioSpec()
    loss = portfolio_loss(spec.eps, spec.lam)
    xbar = PORTFOLIO_CONTEXT

    def z0_for(model):
        z = np.full(PORTFOLIO_MEAN.size, 1.0 / PORTFOLIO_MEAN.size)
        neg = -(model.ys @ z)
        beta0 = float(np.quantile(neg, 1.0 - spec.eps))
        return np.concatenate([z, [beta0]])

    def settings_for(model):
        neg = -(model.ys @ np.full(PORTFOLIO_MEAN.size, 1.0 / PORTFOLIO_MEAN.size))
        spread = float(np.subtract(*np.percentile(neg, [75, 25]))) or 1.0
        return SolveSettings(max_iter=max_iter, step_scale=max(1.0, abs(spread)), restarts=2)

    def make_cell(family, n, s_idx):
        def cell():
            rng = _cell_rng(seed, 10 + (0 if family == "nw" else 1), n, s_idx)
            data = gen.sample(n, rng)
            model = empirical_model(data)
            learner = build_learner(family, data, smoother=smoother, bandwidth=bandwidth, k=k)
            settings = settings_for(model)
            z0 = z0_for(model)
            r = math.log(1.0 / target_b) / n
            nom = nominal_prescribe(learner, loss, model, xbar, settings=settings, z0=z0)
            rob = robust_prescribe(RobustConfig(target_b=target_b), learner, loss, model, xbar,
                                   settings=settings, z0=z0)
            eval_seed = seed + 104729 + 31 * n + s_idx
            oos_n, se_n = out_of_sample_eval(nom.z, learner, loss, gen, xbar,
                                             test_sets, test_size, seed=eval_seed)
            oos_r, se_r = out_of_sample_eval(rob.z, learner, loss, gen, xbar,
                                             test_sets, test_size, seed=eval_seed)
            row_n = dict(n=n, seed=s_idx, oos_cost=oos_n, oos_se=se_n,
                         train_cost=nom.cost, radius=0.0)
            row_r = dict(n=n, seed=s_idx, oos_cost=oos_r, oos_se=se_r,
                         train_cost=rob.cost, radius=rob.radius if rob.radius is not None else r)
            return family, row_n, row_r
        return cell

    cells = [make_cell(f, n, s) for f in learners for n in n_grid for s in range(seeds)]
    results = _run_cells(cells, threads)

    tables: dict[str, list[dict]] = {}
    for family in learners:
        tables[f"portfolio_{family}_nominal"] = []
        tables[f"portfolio_{family}_robust"] = []
    for family, row_n, row_r in results:
        tables[f"portfolio_{family}_nominal"].append(row_n)
        tables[f"portfolio_{family}_robust"].append(row_r)
    for t in tables.values():
        t.sort(key=lambda row: (row["n"], row["seed"]))
    manifest = {
        "experiment": "portfolio",
        "columns": ["n", "seed", "oos_cost", "oos_se", "train_cost", "radius"],
        "context": list(map(float, xbar)),
        "seeds": list(range(seeds)),
        "base_seed": seed,
        "target_b": target_b,
        "test_sets": test_sets,
        "test_size": test_size,
        "variance_convention": variance_convention,
    }
    return tables, manifest
