import math

import numpy as np
import pytest

import boro
from boro.engine import (
    SolveSettings,
    bisect_root,
    bracket_minimum,
    check_gradient,
    log_sum_exp,
    minimize_convex,
    minimize_scalar_convex,
    project_simplex,
    scaled_log_sum_exp,
)
from boro.errors import SolverError
from boro.experiments import newsvendor_loss, portfolio_loss


class TestLogSumExp:
    def test_equal_half_weights(self):
        assert log_sum_exp([0.0, 0.0], log_weights=np.log([0.5, 0.5])) == pytest.approx(0.0)

    def test_unit_weights(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0))

    def test_no_overflow(self):
        assert log_sum_exp([1000.0, 0.0]) == pytest.approx(1000.0)
        assert log_sum_exp([1e6, -1e6]) == pytest.approx(1e6)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            log_sum_exp([])

    def test_scaled_limit(self):
        v = np.array([3.0, 1.0, -2.0])
        w = np.array([0.2, 0.5, 0.3])
        assert scaled_log_sum_exp(0.0, v, w) == 3.0
        # matches the plain version at nu = 1
        assert scaled_log_sum_exp(1.0, v, w) == pytest.approx(log_sum_exp(v, np.log(w)))
        # stable at extreme temperatures
        assert scaled_log_sum_exp(1e-300, v, w) == pytest.approx(3.0)
        assert math.isfinite(scaled_log_sum_exp(1e6, v, w))


class TestBisectRoot:
    def test_linear(self):
        assert bisect_root(lambda x: x - 1.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-9)

    def test_exponential(self):
        assert bisect_root(lambda x: math.exp(x) - 2.0, 0.0, 2.0) == pytest.approx(
            math.log(2.0), abs=1e-9
        )

    def test_no_sign_change(self):
        with pytest.raises(ValueError, match="sign change"):
            bisect_root(lambda x: x + 10.0, 0.0, 1.0)


class TestProjectSimplex:
    def test_hand_case(self):
        assert project_simplex([0.5, 0.9]) == pytest.approx([0.3, 0.7])

    def test_idempotent_on_feasible(self):
        v = np.array([0.2, 0.3, 0.5])
        assert project_simplex(v) == pytest.approx(v, abs=1e-15)

    def test_clamp_then_renormalize(self):
        assert project_simplex([-5.0, 3.0]) == pytest.approx([0.0, 1.0])

    def test_fixed_point_and_feasibility(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.normal(size=int(rng.integers(1, 9))) * 10
            p = project_simplex(v)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p >= 0)
            assert project_simplex(p) == pytest.approx(p, abs=1e-12)

    def test_projection_optimality(self):
        # no random feasible point is closer than the projection
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.normal(size=4) * 3
            p = project_simplex(v)
            for _ in range(20):
                q = rng.dirichlet(np.ones(4))
                assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-12


class TestMinimizeConvex:
    def test_quadratic(self):
        res = minimize_convex(lambda z: ((z[0] - 3.0) ** 2, np.array([2 * (z[0] - 3.0)])), [0.0])
        assert res.x[0] == pytest.approx(3.0, abs=1e-6)

    def test_flat_argmin_value(self):
        obj = lambda z: (abs(z[0] - 1.0) + abs(z[0] - 2.0), np.array([0.0]))
        res = minimize_convex(obj, [0.0])
        assert res.value == pytest.approx(1.0, abs=1e-8)

    def test_linear_on_simplex(self):
        c = np.array([1.0, 0.0, 2.0])
        obj = lambda z: (float(c @ z), c.copy())
        res = minimize_convex(obj, np.ones(3) / 3, project=project_simplex,
                              settings=SolveSettings(max_iter=2000, step_scale=1.0))
        assert res.value == pytest.approx(0.0, abs=1e-3)

    def test_deterministic_given_seed(self):
        obj = lambda z: (float(z @ z), 2 * z)
        a = minimize_convex(obj, np.array([1.0, -2.0]), project=lambda z: z, seed=7)
        b = minimize_convex(obj, np.array([1.0, -2.0]), project=lambda z: z, seed=7)
        assert np.array_equal(a.x, b.x) and a.value == b.value

    def test_bracket_unbounded(self):
        with pytest.raises(SolverError):
            bracket_minimum(lambda x: -x, 0.0, 1.0)

    def test_scalar_convex(self):
        x, v = minimize_scalar_convex(lambda t: (t - 2.5) ** 2 + 1.0, x0=-10.0)
        assert x == pytest.approx(2.5, abs=1e-6)
        assert v == pytest.approx(1.0, abs=1e-10)


class TestGradientChecks:
    def test_newsvendor_subgradient(self):
        loss = newsvendor_loss()
        rng = np.random.default_rng(2)
        for _ in range(40):
            y = np.array([rng.normal(100, 10)])
            z = np.array([rng.normal(100, 10)])
            if abs(z[0] - y[0]) < 1e-3:
                continue  # differentiable points only
            err = check_gradient(lambda zz: loss.loss(zz, y), lambda zz: loss.subgradient(zz, y), z)
            assert err < 1e-4

    def test_cvar_subgradient(self):
        loss = portfolio_loss()
        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(60):
            y = rng.normal(80, 30, size=6)
            z = np.concatenate([rng.dirichlet(np.ones(6)), [rng.normal(-80, 30)]])
            zy = float(z[:6] @ y)
            if abs(-zy - z[6]) < 1e-2:
                continue  # stay away from the hinge kink
            err = check_gradient(lambda zz: loss.loss(zz, y), lambda zz: loss.subgradient(zz, y), z)
            assert err < 1e-4
            checked += 1
        assert checked > 20


def test_solve_settings_validated():
    with pytest.raises(ValueError):
        SolveSettings(tol_obj=0.0)
    with pytest.raises(ValueError):
        SolveSettings(max_iter=0)
