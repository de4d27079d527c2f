"""Shared numerical kit.

Stable (scaled) log-sum-exp, bisection root finding, bracketed scalar
minimization of convex functions, Euclidean projection onto the probability
simplex, a projected subgradient method with iterate averaging, and a
finite-difference gradient checker. Everything is deterministic given an
explicit seed; nothing touches global RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SolverError


@dataclass(frozen=True)
class SolveSettings:
    """Tolerances and budgets for the convex minimizers.

    ``step_scale`` is the constant ``a`` in the diminishing a/(1+t)
    subgradient step rule; iterates are averaged in subgradient mode.
    """

    tol_obj: float = 1e-8
    tol_x: float = 1e-9
    max_iter: int = 10_000
    step_scale: float = 1.0
    restarts: int = 2

    def __post_init__(self):
        if self.tol_obj <= 0 or self.tol_x <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("iteration budget must be positive")


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    value: float
    iterations: int
    final_step: float
    status: str


def log_sum_exp(exponents, log_weights=None) -> float:
    """log(sum_i w_i exp(e_i)) with a max shift; w_i given as log-weights.

    Safe for exponents of magnitude up to around 1e6 and beyond; an empty
    input is an error.
    """
    e = np.asarray(exponents, dtype=float)
    if e.size == 0:
        raise ValueError("log_sum_exp of empty input")
    if log_weights is not None:
        e = e + np.asarray(log_weights, dtype=float)
    m = np.max(e)
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.sum(np.exp(e - m))))


def scaled_log_sum_exp(nu: float, values, weights) -> float:
    """nu * log(sum_i w_i exp(v_i / nu)) for nu >= 0, weights >= 0.

    Computed as max(v) + nu*log(sum w exp((v-max)/nu)), which stays finite
    for any nu > 0 (the shifted exponentials are <= 1). The nu -> 0 limit
    is max(v over positive weights) and is returned exactly at nu == 0.
    Entries with zero weight are ignored; all-zero weights give -inf.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    mask = w > 0
    if not np.any(mask):
        return -math.inf
    v = v[mask]
    w = w[mask]
    m = float(np.max(v))
    if nu == 0.0:
        return m
    return m + nu * math.log(float(np.sum(w * np.exp((v - m) / nu))))


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    tol_x: float = 1e-9,
    max_iter: int = 200,
) -> float:
    """Root of a monotone ``f`` on [lo, hi] by bisection.

    Requires a sign change on the bracket; stops when |f| <= tol or the
    bracket width drops below tol_x.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("bracket does not straddle a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or (hi - lo) <= tol_x:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by the sorting method."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("project_simplex expects a finite 1-d vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    js = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / js > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, tol_x: float, max_iter: int = 200):
    """Golden-section minimum of a unimodal f on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(max_iter):
        if (b - a) <= tol_x * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        if fc < best_f:
            best_x, best_f = c, fc
        if fd < best_f:
            best_x, best_f = d, fd
    return best_x, best_f


def bracket_minimum(f, x0: float = 0.0, step: float = 1.0, max_grow: int = 200):
    """Expand geometrically from x0 until a convex f turns upward.

    Returns (lo, hi) containing a minimizer. Raises SolverError when the
    objective keeps descending past a huge range (unbounded below).
    """
    step = abs(step) if step != 0 else 1.0
    a, fa = x0, f(x0)
    b, fb = x0 + step, f(x0 + step)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
        step = -step
    # walk downhill from b, doubling the stride
    c, fc = b + step, f(b + step)
    grows = 0
    while fc < fb:
        step *= 2.0
        a, fa = b, fb
        b, fb = c, fc
        c, fc = b + step, f(b + step)
        grows += 1
        if grows > max_grow or abs(step) > 1e14:
            raise SolverError("objective appears unbounded below", iterate=np.array([b]))
    return (min(a, c), max(a, c))


def minimize_scalar_convex(
    f: Callable[[float], float],
    x0: float = 0.0,
    step: float = 1.0,
    bounds: tuple[float, float] | None = None,
    tol_x: float = 1e-9,
) -> tuple[float, float]:
    """Minimize a convex scalar function; returns (x, f(x))."""
    if bounds is None:
        lo, hi = bracket_minimum(f, x0, step)
    else:
        lo, hi = bounds
    return _golden_min(f, lo, hi, tol_x)


def minimize_convex(
    obj: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    settings: SolveSettings | None = None,
    seed: int = 0,
) -> SolveResult:
    """Minimize a convex objective with a value+subgradient oracle.

    One-dimensional unconstrained problems use bracketed golden-section on
    the value alone (exact enough for piecewise-linear costs). Otherwise a
    projected subgradient method with normalized steps a/(1+t) and iterate
    averaging runs for each restart; restarts perturb the start point
    deterministically from ``seed`` and the best point seen wins.
    """
    settings = settings or SolveSettings()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if project is None and x0.size == 1:
        x, v = minimize_scalar_convex(
            lambda t: obj(np.array([t]))[0],
            x0=float(x0[0]),
            step=max(1.0, settings.step_scale),
            tol_x=settings.tol_x,
        )
        return SolveResult(np.array([x]), v, 0, 0.0, "converged")

    proj = project if project is not None else (lambda z: z)
    rng = np.random.default_rng(seed)
    best_x, best_f = None, math.inf
    status = "converged"
    total_it = 0
    last_step = 0.0
    for rep in range(settings.restarts):
        x = np.asarray(x0, dtype=float)
        if rep > 0:
            x = x + rng.normal(scale=0.3 * settings.step_scale, size=x.shape)
        x = proj(x)
        avg = x.copy()
        f_hist: list[float] = []
        rep_best = math.inf
        for t in range(settings.max_iter):
            v, g = obj(x)
            if not np.isfinite(v):
                raise SolverError("non-finite objective value", iterate=x)
            if v < best_f:
                best_f, best_x = v, x.copy()
            rep_best = min(rep_best, v)
            gn = float(np.linalg.norm(g))
            if gn < 1e-14:
                break
            last_step = settings.step_scale / (1.0 + t)
            x = proj(x - last_step * (g / gn))
            avg = (avg * (t + 1) + x) / (t + 2)
            if (t + 1) % 32 == 0:
                va, _ = obj(avg)
                if va < best_f:
                    best_f, best_x = va, avg.copy()
                rep_best = min(rep_best, va)
            f_hist.append(rep_best)
            if t > 300 and f_hist[-300] - rep_best <= settings.tol_obj * (1.0 + abs(rep_best)):
                break
            total_it += 1
        else:
            # budget exhausted while still making progress
            win = max(1, settings.max_iter // 4)
            if len(f_hist) > win and f_hist[-win] - rep_best > 1e-3 * (1.0 + abs(rep_best)):
                raise SolverError(
                    "subgradient method exhausted its iteration budget while improving",
                    iterate=best_x if best_x is not None else x,
                )
            status = "max_iter"
        va, _ = obj(avg)
        if va < best_f:
            best_f, best_x = va, avg.copy()
    return SolveResult(best_x, best_f, total_it, last_step, status)


def check_gradient(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x,
    h: float = 1e-6,
) -> float:
    """Max relative error between ``grad`` and central finite differences."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad(x), dtype=float)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (f(x + e) - f(x - e)) / (2.0 * h)
        denom = max(1.0, abs(fd), abs(g[i]))
        worst = max(worst, abs(fd - g[i]) / denom)
    return worst
