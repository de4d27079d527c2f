"""Robust contextual costs over relative-entropy ambiguity sets.

The adversary reweights the empirical model within a KL ball of radius r
around the training weights; the robust cost of a decision is the worst
contextual expected loss over that ball. For the kernel learner the
evaluation reduces to a two-variable dual (a cost level alpha and a
temperature nu); for the k-NN learner each neighborhood index j contributes
a partial cost whose dual adds two multipliers for the neighborhood mass
constraints, and the full cost is the max over j.

We solve the duals by eliminating everything but (alpha, nu): for fixed
alpha and nu the two mass multipliers minimize to a closed form that is
exactly a KL projection of three group masses (inner neighborhood, shell
point, outside) onto {q1 <= (k-1)/n, q1 + q2 >= k/n}. The dual value is
then inf{alpha : min_nu G(alpha, nu) <= 0}, found by bisection on alpha
with a vectorized search over log nu. The nu -> 0 boundary carries the
regime where the budget is large enough to concentrate all contextual
weight on the worst support points; it is evaluated exactly by the same
scaled log-sum-exp and short-circuited analytically where possible.

Worst-case reweightings come out of the exponential tilt at the dual
optimum at no extra cost; in the boundary regime they are rebuilt as the
minimum-divergence weights attaining the ceiling.

Pearson and Burg distances get cost evaluation through a generic primal
maximizer only: no dual fast path and no resampling guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .divergences import ModelDistance, bootstrap_distance, model_distance
from .engine import SolveSettings, minimize_convex
from .errors import SolverError
from .learners import (
    NeighborhoodChain,
    NnLearner,
    NwLearner,
    build_neighborhoods,
    nn_contextualize,
    nw_contextualize,
    select_neighborhood,
)
from .model import EmpiricalModel, LossSpec, expected_loss
from .prescribe import Prescription, nominal_prescribe
from .smoothers import smoother_weights

_MASS_TOL = 1e-12
# Bounds on log(nu) for the dual temperature search. Smoother weights can
# span hundreds of orders of magnitude when the context sits far in the
# covariate tail, and excluding a weight tier S requires temperatures of
# order S * loss; the low end therefore runs to the edge of double range.
_T_LO, _T_HI = -700.0, 40.0
_T_GRID = np.linspace(_T_LO, _T_HI, 150)
# weights below this are indistinguishable from zero in any representable
# dual evaluation; snapping keeps the in/out window classification exact
_S_SNAP = 1e-290


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RobustConfig:
    """Ambiguity ball: a distance plus either a radius or a target
    disappointment level from which the radius is derived."""

    distance: str | ModelDistance = "bootstrap"
    radius: float | None = None
    target_b: float | None = None

    def __post_init__(self):
        if isinstance(self.distance, str):
            object.__setattr__(self, "distance", model_distance(self.distance))
        if (self.radius is None) == (self.target_b is None):
            raise ValueError("set exactly one of radius and target_b")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.target_b is not None:
            if not (0.0 < self.target_b <= 1.0):
                raise ValueError("target_b must lie in (0, 1]")
            if self.kind != "bootstrap":
                raise ValueError("disappointment targets require the bootstrap distance")

    @property
    def kind(self) -> str:
        return self.distance.kind

    def resolve_radius(self, n: int, radii: "MinRadii | None" = None) -> float:
        if self.radius is not None:
            return float(self.radius)
        if radii is None:
            return calibrate_radius_nw(self.target_b, n)
        return calibrate_radius_nn(self.target_b, n, radii)


@dataclass(frozen=True)
class RobustEvaluation:
    """Worst-case cost of one decision plus the certificate pieces."""

    cost: float
    worst_case: np.ndarray | None = None  # weights aligned to the support
    alpha: float = math.nan
    nu: float | None = None
    eta: tuple[float, float] | None = None
    active_j: int | None = None
    scale: float | None = None  # normalization 1 / sum(S * worst_case) on the window

    @property
    def feasible(self) -> bool:
        return self.cost > -math.inf

    def worst_case_model(self, model: EmpiricalModel) -> EmpiricalModel:
        """Materialize the worst-case reweighting, dropping zero-mass points."""
        if self.worst_case is None:
            raise ValueError("no worst-case weights recorded")
        keep = self.worst_case > 0
        w = self.worst_case[keep]
        return EmpiricalModel(
            xs=model.xs[keep], ys=model.ys[keep], prob=w / w.sum(), n=model.n
        )


_INFEASIBLE = RobustEvaluation(cost=-math.inf)


@dataclass(frozen=True)
class MinRadii:
    """Per-neighborhood minimum radii: the smallest divergence at which the
    ambiguity ball meets the j-th neighborhood's model set."""

    values: np.ndarray  # (s,) indexed by j - 1

    def value(self, j: int) -> float:
        return float(self.values[j - 1])

    @property
    def size(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# Three-group KL projection (closed form, drives the dual and the radii)
# ---------------------------------------------------------------------------


def _kl3_grid(nus: np.ndarray, tau: np.ndarray, cap: float, floor: float):
    """KL projection of three group masses, vectorized over temperatures.

    Group weights are given in scaled-log form tau_g = nu * log(w_g) (rows
    of ``tau``, shape (3, K); -inf marks an empty group). Minimizes
    sum_g q_g log(q_g / w_g) over the simplex subject to q1 <= cap and
    q1 + q2 >= floor. Returns (nu * value, q) with shapes (K,) and (K, 3);
    infeasible columns get +inf. The optimum lies on one of the four
    active-set candidates (none, cap, floor, both), each proportional to w
    on its free coordinates.
    """
    K = nus.size
    t0, t1, t2 = (np.asarray(t, dtype=float) for t in tau)
    f0, f1, f2 = np.isfinite(t0), np.isfinite(t1), np.isfinite(t2)

    def value(q0, q1, q2):  # three (K,) mass rows -> (K,)
        out = np.zeros(K)
        bad = np.zeros(K, dtype=bool)
        for q, t, f in ((q0, t0, f0), (q1, t1, f1), (q2, t2, f2)):
            pos = q > 0
            bad |= pos & ~f
            safe_q = np.where(pos, q, 1.0)
            out += np.where(pos, q * (nus * np.log(safe_q)) - q * np.where(f, t, 0.0), 0.0)
        out[bad] = np.inf
        return out

    def frac(ta, fa, tb, fb):
        """w_a / (w_a + w_b) from the scaled logs; stable when both weights
        underflow relative to the remaining group. nan marks 'both empty'."""
        with np.errstate(over="ignore", invalid="ignore"):
            d = np.clip((tb - ta) / nus, -700.0, 700.0)
            out = np.where(fa & fb, 1.0 / (1.0 + np.exp(d)), np.nan)
        out = np.where(fa & ~fb, 1.0, out)
        out = np.where(~fa & fb, 0.0, out)
        return out

    best_v = np.full(K, np.inf)
    best_q = np.zeros((K, 3))

    def consider(ok, q0, q1, q2):
        nonlocal best_v, best_q
        v = value(q0, q1, q2)
        v = np.where(ok, v, np.inf)
        better = v < best_v
        if np.any(better):
            best_v = np.where(better, v, best_v)
            best_q[better, 0] = q0[better]
            best_q[better, 1] = q1[better]
            best_q[better, 2] = q2[better]
        return v

    # no constraint active: q proportional to w (stable softmax)
    big = np.stack([np.where(f0, t0, -np.inf), np.where(f1, t1, -np.inf), np.where(f2, t2, -np.inf)])
    mx = np.max(big, axis=0)
    with np.errstate(invalid="ignore"):
        p = np.exp((big - mx[None, :]) / nus[None, :])
    p[np.isnan(p)] = 0.0
    p /= p.sum(axis=0)[None, :]
    consider((p[0] <= cap + _MASS_TOL) & (p[0] + p[1] >= floor - _MASS_TOL), p[0], p[1], p[2])

    # cap active; remaining mass splits between shell and outside
    # (placing mass on an empty group is rejected by value() directly)
    g2 = frac(t1, f1, t2, f2)
    q1b = np.where(np.isnan(g2), 0.0, (1.0 - cap) * g2)
    q2b = np.where(np.isnan(g2), 0.0, (1.0 - cap) * (1.0 - g2))
    consider(~np.isnan(g2) & (cap + q1b >= floor - _MASS_TOL),
             np.full(K, cap), q1b, q2b)

    # floor active; inner mass splits between the first two groups
    g1 = frac(t0, f0, t1, f1)
    q0c = np.where(np.isnan(g1), 0.0, floor * g1)
    q1c = np.where(np.isnan(g1), 0.0, floor * (1.0 - g1))
    consider(~np.isnan(g1) & (q0c <= cap + _MASS_TOL),
             q0c, q1c, np.full(K, 1.0 - floor))

    # both active
    consider(np.ones(K, dtype=bool),
             np.full(K, cap), np.full(K, floor - cap), np.full(K, 1.0 - floor))
    return best_v, best_q


def _kl3(w, cap: float, floor: float) -> tuple[float, np.ndarray]:
    """Plain (nu = 1) three-group projection on weights ``w``; exact zeros
    are snapped for the already-feasible case."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        tau = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), -np.inf)
    v, q = _kl3_grid(np.array([1.0]), tau[:, None], cap, floor)
    val = float(v[0])
    if val < 1e-14:
        val = 0.0
    return val, q[0]


# ---------------------------------------------------------------------------
# Minimum radii and radius calibration
# ---------------------------------------------------------------------------


def min_radii(model: EmpiricalModel, chain: NeighborhoodChain, k: int) -> MinRadii:
    """Smallest relative entropy from the training weights to each
    neighborhood's model set, per neighborhood index."""
    if not (1 <= k <= model.n):
        raise ValueError("k must lie in [1, n]")
    n = model.n
    cap, floor = (k - 1) / n, k / n
    s = chain.size
    out = np.empty(s)
    cum = chain.cum
    probs = model.prob[chain.order]
    for j in range(1, s + 1):
        w = (cum[j - 1], float(probs[j - 1]), 1.0 - cum[j])
        out[j - 1], _ = _kl3(np.maximum(w, 0.0), cap, floor)
    return MinRadii(values=out)


def calibrate_radius_nw(target_b: float, n: int) -> float:
    """Radius giving resampling disappointment at most b: log(1/b) / n."""
    if not (0.0 < target_b <= 1.0):
        raise ValueError("target_b must lie in (0, 1]")
    return math.log(1.0 / target_b) / n


def nn_disappointment_bound(r: float, n: int, radii: MinRadii) -> float:
    """sum_j exp(-n * max(r, r_j*)), the k-NN disappointment bound."""
    return float(np.sum(np.exp(-n * np.maximum(r, radii.values))))


def calibrate_radius_nn(target_b: float, n: int, radii: MinRadii) -> float:
    """Smallest r >= 0 whose k-NN disappointment bound is at most b."""
    if not (0.0 < target_b <= 1.0):
        raise ValueError("target_b must lie in (0, 1]")
    if nn_disappointment_bound(0.0, n, radii) <= target_b:
        return 0.0
    hi = math.log(max(radii.size, 2) / target_b) / n + 1.0
    lo = 0.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if nn_disappointment_bound(mid, n, radii) <= target_b:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Dual machinery shared by both learners
# ---------------------------------------------------------------------------


def _scaled_lse_grid(nus: np.ndarray, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """nu * log(sum w exp(v / nu)) for every nu in a grid; (K,) output."""
    if values.size == 0:
        return np.full(nus.size, -np.inf)
    a = float(np.max(values))
    E = np.exp((values - a)[None, :] / nus[:, None])
    return a + nus * np.log(E @ weights)


def _bracket_ties(ts: np.ndarray, vals: np.ndarray) -> tuple[float, float, int]:
    """Plateau-aware bracket: the block of near-minimal samples plus one
    neighbor on each side (valid for a unimodal slice even when double
    rounding flattens it)."""
    vmin = float(np.min(vals))
    ties = np.nonzero(vals <= vmin + 1e-12 * (1.0 + abs(vmin)))[0]
    lo = float(ts[max(int(ties[0]) - 1, 0)])
    hi = float(ts[min(int(ties[-1]) + 1, len(ts) - 1)])
    return lo, hi, int(ties[0])


def _min_over_t(G_grid, hint: float | None = None) -> tuple[float, float]:
    """Minimize a convex-in-nu dual slice over t = log(nu).

    ``G_grid`` maps an array of t values to G values (vectorized). A window
    around ``hint`` is tried first; whenever its best point sits on an
    interior edge the full coarse grid takes over. The bracket around the
    sampled minimum then shrinks through fixed vectorized zoom rounds,
    which is both faster and plateau-proof compared with scalar refinement.
    """
    ts = vals = None
    if hint is not None:
        ts = np.clip(hint + np.linspace(-3.0, 3.0, 13), _T_LO, _T_HI)
        vals = G_grid(ts)
        i = int(np.argmin(vals))
        on_interior_edge = (i == 0 and ts[0] > _T_LO + 1e-9) or (
            i == len(ts) - 1 and ts[-1] < _T_HI - 1e-9
        )
        if on_interior_edge:
            ts = vals = None
    if ts is None:
        ts = _T_GRID
        vals = G_grid(ts)
    best_t, best_v = float(ts[int(np.argmin(vals))]), float(np.min(vals))
    lo, hi, _ = _bracket_ties(ts, vals)
    for _ in range(6):
        if hi - lo < 1e-8:
            break
        ts = np.linspace(lo, hi, 17)
        vals = G_grid(ts)
        i = int(np.argmin(vals))
        if float(vals[i]) < best_v:
            best_v, best_t = float(vals[i]), float(ts[i])
        lo, hi, _ = _bracket_ties(ts, vals)
    return best_t, best_v


def _sup_alpha(h, lo: float, hi: float, iters: int = 44) -> float:
    """inf{alpha : h(alpha) <= 0} for a nonincreasing h, by bisection.

    Returns the feasible endpoint, so the result overshoots the exact
    supremum by at most the final bracket width (conservative side).
    """
    span = max(hi - lo, 1e-9)
    for _ in range(6):
        if h(lo) > 0:
            break
        lo -= span
        span *= 2.0
    else:
        return lo  # entire range feasible; value is at or below lo
    for _ in range(6):
        if h(hi) <= 0:
            break
        hi += span
        span *= 2.0
    else:
        raise SolverError("dual constraint infeasible on the whole bracket", iterate=np.array([lo, hi]))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if h(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Kernel-learner (NW) robust cost
# ---------------------------------------------------------------------------


class _NwRobustContext:
    """Static pieces of the kernel-learner dual at one (model, context)."""

    def __init__(self, learner: NwLearner, loss: LossSpec, model: EmpiricalModel, xbar):
        self.model = model
        self.loss = loss
        s_w = smoother_weights(learner.smoother, learner.bandwidth, model.xs, xbar)
        s_w[s_w < _S_SNAP] = 0.0
        self.s_w = s_w
        if float(self.s_w @ model.prob) <= 0:
            # preserve the nominal failure mode
            nw_contextualize(learner, model, xbar)
        self.m = model.prob

    def cost(self, z: np.ndarray, r: float) -> RobustEvaluation:
        ell = self.loss.losses(z, self.model.ys)
        s_w, m = self.s_w, self.m
        inside = s_w > 0
        lmax = float(np.max(ell[inside]))
        nominal = float((s_w * ell) @ m / (s_w @ m))
        if r == 0.0:
            return RobustEvaluation(cost=nominal, worst_case=m.copy(), alpha=nominal, nu=None, scale=1.0 / float(s_w @ m))

        # ceiling short-circuit: budget large enough to park all contextual
        # weight on the worst in-window points
        allowed = (~inside) | (ell >= lmax - 1e-11 * (1.0 + abs(lmax)))
        mass_allowed = float(m[allowed].sum())
        r_ceil = -math.log(mass_allowed) if mass_allowed > 0 else math.inf
        if r >= r_ceil - 1e-12:
            q = np.where(allowed, m, 0.0)
            q = q / q.sum()
            denom = float(s_w @ q)
            if denom > 0 and abs(float((s_w * ell) @ q) / denom - lmax) <= 1e-9 * (1.0 + abs(lmax)):
                return RobustEvaluation(cost=lmax, worst_case=q, alpha=lmax, nu=0.0, scale=1.0 / denom)

        v_base = s_w * ell

        hint = {"t": None}

        def h(alpha: float) -> float:
            def G_grid(ts):
                nus = np.exp(ts)
                return r * nus + _scaled_lse_grid(nus, v_base - alpha * s_w, m)

            t_star, g_star = _min_over_t(G_grid, hint["t"])
            hint["t"] = t_star
            return g_star

        span = max(lmax - nominal, 1e-6 * (1.0 + abs(lmax)))
        alpha_star = _sup_alpha(h, nominal - 1e-9 * (1.0 + abs(nominal)), lmax + 1e-9 * (1.0 + abs(lmax)) + 0.01 * span)

        # recover the exponential tilt at the optimum
        def G_grid_final(ts):
            nus = np.exp(ts)
            return r * nus + _scaled_lse_grid(nus, v_base - alpha_star * s_w, m)

        t_star, _ = _min_over_t(G_grid_final, hint["t"])
        nu = math.exp(t_star)
        vv = v_base - alpha_star * s_w
        q = m * np.exp((vv - vv.max()) / nu)
        q = q / q.sum()
        kl = bootstrap_distance(q, m)
        denom = float(s_w @ q)
        ok = denom > 0 and kl <= r + 1e-8
        if ok:
            cost_q = float((s_w * ell) @ q / denom)
            ok = abs(cost_q - alpha_star) <= 1e-6 * (1.0 + abs(alpha_star))
        if not ok:
            # boundary regime: rebuild as the cheapest ceiling-attaining weights
            allowed = (~inside) | (ell >= lmax - 1e-11 * (1.0 + abs(lmax)))
            q = np.where(allowed, m, 0.0)
            q = q / q.sum()
            denom = float(s_w @ q)
            nu = 0.0
        return RobustEvaluation(
            cost=alpha_star,
            worst_case=q,
            alpha=alpha_star,
            nu=nu,
            scale=(1.0 / denom) if denom > 0 else None,
        )


def robust_nw_cost(
    cfg: RobustConfig,
    learner: NwLearner,
    loss: LossSpec,
    model: EmpiricalModel,
    xbar,
    z,
) -> RobustEvaluation:
    """Worst-case kernel-learner cost of decision z over the ambiguity ball."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r = cfg.resolve_radius(model.n)
    ctx = _NwRobustContext(learner, loss, model, xbar)
    if cfg.kind != "bootstrap":
        return _generic_eval(cfg.distance, ctx.s_w, loss.losses(z, model.ys), model.prob, r)
    return ctx.cost(z, r)


# ---------------------------------------------------------------------------
# Neighbors-learner (NN) robust cost
# ---------------------------------------------------------------------------


class _NnRobustContext:
    """Static pieces of the k-NN duals at one (model, context)."""

    def __init__(self, learner: NnLearner, loss: LossSpec, model: EmpiricalModel, xbar):
        if learner.k > model.n:
            raise ValueError("k cannot exceed the sample count")
        self.learner = learner
        self.loss = loss
        self.model = model
        self.xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
        self.chain = build_neighborhoods(learner.proximity, model, xbar)
        s_w = smoother_weights(learner.smoother, learner.bandwidth, model.xs, xbar)
        s_w[s_w < _S_SNAP] = 0.0
        self.s_w = s_w
        self.radii = min_radii(model, self.chain, learner.k)
        self.k = learner.k
        self.n = model.n
        self.cap = (learner.k - 1) / model.n
        self.floor = learner.k / model.n

    # -- helpers on the chain ------------------------------------------------

    def _groups(self, j: int):
        order = self.chain.order
        return order[: j - 1], order[j - 1 : j], order[j:]

    def _window_cost(self, weights: np.ndarray, ell: np.ndarray, j: int) -> float:
        idx = self.chain.prefix(j)
        num = float((self.s_w[idx] * ell[idx]) @ weights[idx])
        den = float(self.s_w[idx] @ weights[idx])
        return num / den if den > 0 else -math.inf

    def _spread(self, q3: np.ndarray, j: int, allowed: np.ndarray | None = None) -> np.ndarray:
        """Distribute group masses over support points proportional to the
        training weights (restricted to ``allowed`` when given)."""
        g1, g2, g3 = self._groups(j)
        m = self.model.prob
        out = np.zeros(m.size)
        for g, qg in zip((g1, g2, g3), q3):
            if qg <= 0 or g.size == 0:
                continue
            w = m[g].copy()
            if allowed is not None:
                w = np.where(allowed[g], w, 0.0)
            tot = w.sum()
            if tot <= 0:
                if qg > _MASS_TOL:
                    return np.full(m.size, np.nan)  # cannot place this mass
                continue
            out[g] = qg * w / tot
        return out

    def projection_model(self, j: int) -> np.ndarray | None:
        """Closest feasible reweighting for neighborhood j (the radius
        minimizer); None when the group structure admits none."""
        g1, g2, g3 = self._groups(j)
        m = self.model.prob
        w = (float(m[g1].sum()), float(m[g2].sum()), float(m[g3].sum()))
        val, q = _kl3(w, self.cap, self.floor)
        if not math.isfinite(val):
            return None
        spread = self._spread(q, j)
        return None if np.any(np.isnan(spread)) else spread

    # -- partial duals ---------------------------------------------------------

    def partial_cost(
        self,
        j: int,
        z_or_losses,
        r: float,
        hint: float | None = None,
        prune_below: float | None = None,
    ) -> RobustEvaluation | None:
        """Worst case over the j-th neighborhood's model set.

        With ``prune_below`` set, returns None as soon as the dual proves
        the partial cost cannot exceed that level (one constraint check
        instead of a full bisection); used by the max over j.
        """
        if isinstance(z_or_losses, np.ndarray) and z_or_losses.size == self.model.support_size:
            ell = z_or_losses
        else:
            ell = self.loss.losses(z_or_losses, self.model.ys)
        g1, g2, g3 = self._groups(j)
        s_w, m = self.s_w, self.model.prob
        window = self.chain.prefix(j)
        win_inside = s_w[window] > 0
        if not np.any(win_inside):
            return _INFEASIBLE
        r_star = self.radii.value(j)
        if r < r_star - 1e-12:
            return _INFEASIBLE

        lmax = float(np.max(ell[window][win_inside]))

        if r <= r_star + 1e-11:
            spread = self.projection_model(j)
            if spread is None:
                return _INFEASIBLE
            cost = self._window_cost(spread, ell, j)
            if cost == -math.inf:
                return _INFEASIBLE
            if prune_below is not None and cost <= prune_below:
                return None
            return RobustEvaluation(cost=cost, worst_case=spread, alpha=cost, nu=0.0, active_j=j,
                                    scale=self._scale(spread, j))

        # ceiling short-circuit: cheapest weights whose window support hits
        # only top-loss (or zero-smoother) points
        allowed = np.ones(m.size, dtype=bool)
        allowed[window] = (s_w[window] <= 0) | (ell[window] >= lmax - 1e-11 * (1.0 + abs(lmax)))
        w_red = (
            float(np.where(allowed[g1], m[g1], 0.0).sum()),
            float(np.where(allowed[g2], m[g2], 0.0).sum()),
            float(m[g3].sum()),
        )
        val, q = _kl3(w_red, self.cap, self.floor)
        if math.isfinite(val) and r >= val - 1e-12:
            spread = self._spread(q, j, allowed=allowed)
            if not np.any(np.isnan(spread)):
                cost = self._window_cost(spread, ell, j)
                if cost > -math.inf and abs(cost - lmax) <= 1e-9 * (1.0 + abs(lmax)):
                    if prune_below is not None and lmax <= prune_below:
                        return None
                    return RobustEvaluation(cost=lmax, worst_case=spread, alpha=lmax, nu=0.0,
                                            active_j=j, scale=self._scale(spread, j))

        # interior dual: bisection on the cost level
        v1_base, s1, m1 = s_w[g1] * ell[g1], s_w[g1], m[g1]
        v2_base, s2, m2 = s_w[g2] * ell[g2], s_w[g2], m[g2]
        w3 = float(m[g3].sum())
        log_w3 = math.log(w3) if w3 > 0 else -math.inf

        state = {"t": hint}

        def G_grid_at(alpha: float, ts: np.ndarray) -> np.ndarray:
            nus = np.exp(ts)
            tau1 = _scaled_lse_grid(nus, v1_base - alpha * s1, m1)
            tau2 = _scaled_lse_grid(nus, v2_base - alpha * s2, m2)
            tau3 = nus * log_w3 if w3 > 0 else np.full(nus.size, -np.inf)
            nuV, _ = _kl3_grid(nus, np.stack([tau1, tau2, tau3]), self.cap, self.floor)
            # an infeasible projection means this dual point cannot satisfy
            # the constraint at all
            return np.where(np.isfinite(nuV), r * nus - nuV, np.inf)

        def h(alpha: float) -> float:
            t_star, g_star = _min_over_t(lambda ts: G_grid_at(alpha, ts), state["t"])
            state["t"] = t_star
            return g_star

        spread0 = self.projection_model(j)
        base = self._window_cost(spread0, ell, j) if spread0 is not None else float(np.min(ell[window][win_inside]))
        lo = base - 1e-9 * (1.0 + abs(base))
        hi = lmax + 1e-9 * (1.0 + abs(lmax)) + 0.01 * max(lmax - base, 1e-6)
        if prune_below is not None and prune_below >= lo:
            if prune_below >= hi or h(prune_below) <= 0:
                return None  # this neighborhood cannot beat the incumbent
            lo = prune_below
        alpha_star = _sup_alpha(h, lo, hi)

        t_star, _ = _min_over_t(lambda ts: G_grid_at(alpha_star, ts), state["t"])
        return self._recover(j, ell, r, alpha_star, t_star, (v1_base, s1, m1, v2_base, s2, m2, w3, log_w3, g1, g2, g3))

    def _scale(self, weights: np.ndarray, j: int) -> float | None:
        idx = self.chain.prefix(j)
        den = float(self.s_w[idx] @ weights[idx])
        return 1.0 / den if den > 0 else None

    def _recover(self, j, ell, r, alpha, t, parts) -> RobustEvaluation:
        v1_base, s1, m1, v2_base, s2, m2, w3, log_w3, g1, g2, g3 = parts
        nu = math.exp(t)
        nus = np.array([nu])
        v1 = v1_base - alpha * s1
        v2 = v2_base - alpha * s2
        tau1 = _scaled_lse_grid(nus, v1, m1)
        tau2 = _scaled_lse_grid(nus, v2, m2)
        tau3 = nus * log_w3 if w3 > 0 else np.array([-np.inf])
        _, q = _kl3_grid(nus, np.stack([tau1, tau2, tau3]), self.cap, self.floor)
        q = q[0]

        m = self.model.prob
        wc = np.zeros(m.size)
        for g, v, qg in ((g1, v1, q[0]), (g2, v2, q[1])):
            if qg > 0 and g.size:
                t_w = m[g] * np.exp((v - v.max()) / nu)
                wc[g] = qg * t_w / t_w.sum()
        if q[2] > 0 and g3.size:
            wc[g3] = q[2] * m[g3] / m[g3].sum()

        kl = bootstrap_distance(wc, m)
        cost_w = self._window_cost(wc, ell, j)
        ok = (
            kl <= r + 1e-8
            and cost_w > -math.inf
            and abs(cost_w - alpha) <= 1e-6 * (1.0 + abs(alpha))
        )
        if not ok:
            # fall back to the cheapest ceiling-attaining construction
            window = self.chain.prefix(j)
            lmax = float(np.max(ell[window][self.s_w[window] > 0]))
            allowed = np.ones(m.size, dtype=bool)
            allowed[window] = (self.s_w[window] <= 0) | (ell[window] >= lmax - 1e-11 * (1.0 + abs(lmax)))
            w_red = (
                float(np.where(allowed[g1], m[g1], 0.0).sum()),
                float(np.where(allowed[g2], m[g2], 0.0).sum()),
                float(m[g3].sum()),
            )
            val, q_red = _kl3(w_red, self.cap, self.floor)
            if math.isfinite(val):
                cand = self._spread(q_red, j, allowed=allowed)
                if not np.any(np.isnan(cand)):
                    wc = cand
                    q = q_red
                    nu = 0.0

        eta = self._eta(q, np.stack([tau1, tau2, tau3])[:, 0], nu)
        return RobustEvaluation(
            cost=alpha, worst_case=wc, alpha=alpha, nu=nu, eta=eta, active_j=j,
            scale=self._scale(wc, j),
        )

    @staticmethod
    def _eta(q: np.ndarray, tau: np.ndarray, nu: float) -> tuple[float, float] | None:
        if nu <= 0:
            return None
        try:
            eta1 = math.inf if q[2] <= 0 else (tau[2] - tau[1]) + nu * math.log(q[1] / q[2])
            eta2 = math.inf if q[0] <= 0 else (tau[0] - tau[1]) + nu * math.log(q[1] / q[0])
        except ValueError:
            return None
        return (max(eta1, 0.0), max(eta2, 0.0))

    # -- full cost -------------------------------------------------------------

    def cost(self, z: np.ndarray, r: float) -> RobustEvaluation:
        ell = self.loss.losses(z, self.model.ys)
        if r == 0.0:
            j = select_neighborhood(self.chain, self.k, self.n)
            cost = self._window_cost(self.model.prob, ell, j)
            return RobustEvaluation(cost=cost, worst_case=self.model.prob.copy(), alpha=cost,
                                    nu=None, active_j=j, scale=self._scale(self.model.prob, j))
        order = self.chain.order
        inside = self.s_w[order] > 0
        ceilings = np.maximum.accumulate(np.where(inside, ell[order], -np.inf))
        js = sorted(range(1, self.chain.size + 1), key=lambda j: (-ceilings[j - 1], j))
        best: RobustEvaluation | None = None
        hint = None
        for j in js:
            if not math.isfinite(ceilings[j - 1]):
                continue
            if best is not None and ceilings[j - 1] <= best.cost + 1e-12:
                break
            res = self.partial_cost(
                j, ell, r, hint=hint,
                prune_below=None if best is None else best.cost,
            )
            if res is None:
                continue
            if res.feasible:
                if res.nu is not None and res.nu > 0:
                    hint = math.log(res.nu)
                if best is None or res.cost > best.cost:
                    best = res
        if best is None:
            raise SolverError("no feasible neighborhood index; radius handling is inconsistent")
        return best

    def contextual_weights(self, ev: RobustEvaluation) -> np.ndarray:
        """Contextual weights of the worst-case reweighting (full support)."""
        j = ev.active_j if ev.active_j is not None else select_neighborhood(self.chain, self.k, self.n)
        idx = self.chain.prefix(j)
        u = np.zeros(self.model.support_size)
        raw = self.s_w[idx] * ev.worst_case[idx]
        tot = raw.sum()
        if tot <= 0:
            raise SolverError("worst-case weights have no in-window smoother mass")
        u[idx] = raw / tot
        return u


def robust_nn_partial_cost(
    cfg: RobustConfig,
    learner: NnLearner,
    loss: LossSpec,
    model: EmpiricalModel,
    xbar,
    j: int,
    z,
) -> RobustEvaluation:
    """Partial robust cost for one neighborhood index (-inf when the ball
    misses that neighborhood's model set)."""
    ctx = _NnRobustContext(learner, loss, model, xbar)
    r = cfg.resolve_radius(model.n, ctx.radii)
    if cfg.kind != "bootstrap":
        return _generic_partial(cfg, ctx, j, np.atleast_1d(np.asarray(z, dtype=float)), r)
    return ctx.partial_cost(j, np.atleast_1d(np.asarray(z, dtype=float)), r)


def robust_nn_cost(
    cfg: RobustConfig,
    learner: NnLearner,
    loss: LossSpec,
    model: EmpiricalModel,
    xbar,
    z,
) -> RobustEvaluation:
    """Worst-case k-NN cost: the max over neighborhood indices of the
    partial costs, with the maximizing index recorded."""
    ctx = _NnRobustContext(learner, loss, model, xbar)
    r = cfg.resolve_radius(model.n, ctx.radii)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if cfg.kind != "bootstrap":
        best = None
        for j in range(1, ctx.chain.size + 1):
            res = _generic_partial(cfg, ctx, j, z, r)
            if res.feasible and (best is None or res.cost > best.cost):
                best = res
        if best is None:
            raise SolverError("no feasible neighborhood index")
        return best
    return ctx.cost(z, r)


# ---------------------------------------------------------------------------
# Generic convex-distance primal path (no dual, no guarantee)
# ---------------------------------------------------------------------------


def _generic_eval(
    distance: ModelDistance,
    s_w: np.ndarray,
    ell: np.ndarray,
    m: np.ndarray,
    r: float,
    window: np.ndarray | None = None,
    cap: float | None = None,
    floor: float | None = None,
    inner: np.ndarray | None = None,
    active_j: int | None = None,
) -> RobustEvaluation:
    """Maximize the contextual cost ratio over a convex distance ball by
    sequential quadratic programming from several deterministic starts.

    The objective (a ratio of linear forms) is pseudoconcave on the half
    space where the denominator is positive, so any KKT point is a global
    maximizer; multiple starts guard the boundary cases.
    """
    size = m.size
    win = window if window is not None else np.arange(size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[win] = s_w[win] * ell[win]
    b[win] = s_w[win]
    if float(b.sum()) <= 0:
        return _INFEASIBLE

    def neg_ratio(q):
        den = float(b @ q)
        if den <= 1e-12:
            return 1e6
        return -float(a @ q) / den

    cons = [
        {"type": "eq", "fun": lambda q: float(q.sum()) - 1.0},
        {"type": "ineq", "fun": lambda q: r - distance.evaluate(np.maximum(q, 0.0), m)},
    ]
    if floor is not None:
        cons.append({"type": "ineq", "fun": lambda q: float(q[win].sum()) - floor})
    if cap is not None and inner is not None:
        cons.append({"type": "ineq", "fun": lambda q: cap - float(q[inner].sum())})

    eps = 1e-9 if distance.kind == "burg" else 0.0
    bounds = [(eps, 1.0)] * size
    starts = [m.copy()]
    top = int(np.argmax(np.where(b > 0, ell, -np.inf)))
    for lam in (0.5, 0.9):
        q0 = (1 - lam) * m + lam * np.eye(size)[top]
        starts.append(q0 / q0.sum())

    best_q, best_v = None, math.inf
    for q0 in starts:
        try:
            res = scipy.optimize.minimize(
                neg_ratio, np.maximum(q0, eps), method="SLSQP", bounds=bounds,
                constraints=cons, options={"maxiter": 300, "ftol": 1e-12},
            )
        except (ValueError, OverflowError):
            continue
        q = np.maximum(res.x, 0.0)
        tot = q.sum()
        if tot <= 0:
            continue
        q = q / tot
        viol = distance.evaluate(q, m) - r
        if floor is not None:
            viol = max(viol, floor - float(q[win].sum()))
        if cap is not None and inner is not None:
            viol = max(viol, float(q[inner].sum()) - cap)
        if viol <= 1e-7:
            v = neg_ratio(q)
            if v < best_v:
                best_q, best_v = q, v
    if best_q is None:
        return _INFEASIBLE
    den = float(b @ best_q)
    return RobustEvaluation(cost=-best_v, worst_case=best_q, alpha=-best_v, nu=None,
                            active_j=active_j, scale=1.0 / den if den > 0 else None)


def _generic_partial(cfg: RobustConfig, ctx: _NnRobustContext, j: int, z: np.ndarray, r: float) -> RobustEvaluation:
    ell = ctx.loss.losses(z, ctx.model.ys)
    return _generic_eval(
        cfg.distance, ctx.s_w, ell, ctx.model.prob, r,
        window=ctx.chain.prefix(j), cap=ctx.cap, floor=ctx.floor,
        inner=ctx.chain.prefix(j - 1), active_j=j,
    )


# ---------------------------------------------------------------------------
# Robust prescription
# ---------------------------------------------------------------------------


def robust_prescribe(
    cfg: RobustConfig,
    learner: NwLearner | NnLearner,
    loss: LossSpec,
    model: EmpiricalModel,
    xbar,
    settings: SolveSettings | None = None,
    seed: int = 0,
    z0=None,
) -> Prescription:
    """Minimize the robust contextual cost over the feasible decision set.

    Subgradients in z follow the envelope rule: differentiate the loss at
    the worst-case contextual weights. One-dimensional decisions go through
    bracketed golden section on the (convex) robust cost directly.
    """
    settings = settings or SolveSettings()
    is_nn = isinstance(learner, NnLearner)
    if is_nn:
        ctx = _NnRobustContext(learner, loss, model, xbar)
        r = cfg.resolve_radius(model.n, ctx.radii)
    else:
        ctx = _NwRobustContext(learner, loss, model, xbar)
        r = cfg.resolve_radius(model.n)
    if r == 0.0:
        p = nominal_prescribe(learner, loss, model, xbar, settings=settings, seed=seed, z0=z0)
        return Prescription(p.z, p.cost, p.iterations, p.final_step, p.status, radius=0.0,
                            active_j=p.active_j)

    if cfg.kind != "bootstrap":
        def evaluate(z):
            z = np.atleast_1d(z)
            if is_nn:
                return robust_nn_cost(cfg, learner, loss, model, xbar, z)
            ell = loss.losses(z, model.ys)
            return _generic_eval(cfg.distance, ctx.s_w, ell, model.prob, r)
    else:
        def evaluate(z):
            return ctx.cost(np.atleast_1d(z), r)

    last: dict = {}

    def objective(z):
        ev = evaluate(z)
        last["ev"] = ev
        if is_nn:
            u = ctx.contextual_weights(ev)
        else:
            raw = ctx.s_w * ev.worst_case
            u = raw / raw.sum()
        g = loss.mean_subgradient(z, model.ys, u)
        return ev.cost, g

    if z0 is None:
        z0 = loss.project(np.zeros(loss.dim_z))
    project = None if loss.dim_z == 1 and loss.unconstrained() else loss.project
    res = minimize_convex(objective, z0, project=project, settings=settings, seed=seed)
    final = evaluate(res.x)
    return Prescription(
        z=res.x, cost=final.cost, iterations=res.iterations, final_step=res.final_step,
        status=res.status, radius=r, active_j=final.active_j,
    )


def contextual_cost_at_weights(
    learner: NwLearner | NnLearner,
    loss: LossSpec,
    model: EmpiricalModel,
    weights: np.ndarray,
    xbar,
    z,
    j: int | None = None,
) -> float:
    """Contextual expected loss when the model carries ``weights`` instead
    of its empirical weights (used to audit worst-case certificates)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    ell = loss.losses(z, model.ys)
    s_w = smoother_weights(learner.smoother, learner.bandwidth, model.xs, xbar)
    if isinstance(learner, NwLearner):
        idx = np.arange(model.support_size)
    else:
        chain = build_neighborhoods(learner.proximity, model, xbar)
        jj = j if j is not None else select_neighborhood(chain, learner.k, model.n,
                                                         weights=weights, mass_tol=1e-8)
        idx = chain.prefix(jj)
    num = float((s_w[idx] * ell[idx]) @ weights[idx])
    den = float(s_w[idx] @ weights[idx])
    if den <= 0:
        raise SolverError("weights carry no smoother mass at the context")
    return num / den
