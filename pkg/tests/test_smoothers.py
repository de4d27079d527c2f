import math

import numpy as np
import pytest

import boro
from boro.smoothers import evaluate_scaled, get_smoother, smoother_weights

COMPACT = ("uniform", "epanechnikov", "tricubic")


def test_epanechnikov_at_origin():
    assert get_smoother("epanechnikov").evaluate(np.array([0.0])) == pytest.approx(0.75)


def test_gaussian_at_origin():
    assert get_smoother("gaussian").evaluate(np.array([0.0])) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi)
    )


def test_tricubic_at_origin():
    assert get_smoother("tricubic").evaluate(np.array([0.0])) == pytest.approx(70.0 / 81.0)


def test_uniform_outside_scaled_ball():
    s = get_smoother("uniform")
    assert evaluate_scaled(s, 0.5, np.array([1.0])) == 0.0
    assert evaluate_scaled(s, 0.5, np.array([0.4])) == 0.5


def test_naive_is_one_everywhere():
    s = get_smoother("naive")
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert s.evaluate(rng.normal(size=3) * 100) == 1.0


def test_all_smoothers_even_and_nonnegative():
    rng = np.random.default_rng(1)
    for name in boro.smoother_names():
        s = get_smoother(name)
        for _ in range(50):
            dx = rng.normal(size=2) * 2
            v1, v2 = s.evaluate(dx), s.evaluate(-dx)
            assert v1 == pytest.approx(v2, abs=0.0)
            assert v1 >= 0.0


def test_compact_support_vanishes_exactly():
    rng = np.random.default_rng(2)
    for name in COMPACT:
        s = get_smoother(name)
        for _ in range(50):
            dx = rng.normal(size=2)
            h = rng.uniform(0.2, 2.0)
            r = np.linalg.norm(dx) / h
            val = evaluate_scaled(s, h, dx)
            if r > 1:
                assert val == 0.0
            else:
                assert val >= 0.0


def test_scaling_relation():
    rng = np.random.default_rng(3)
    for name in boro.smoother_names():
        s = get_smoother(name)
        for _ in range(30):
            dx = rng.normal(size=2)
            h = rng.uniform(0.1, 3.0)
            c = rng.uniform(0.5, 4.0)
            assert evaluate_scaled(s, c * h, c * dx) == pytest.approx(
                evaluate_scaled(s, h, dx), rel=1e-12, abs=1e-300
            )


def test_scaled_requires_positive_bandwidth():
    with pytest.raises(ValueError):
        evaluate_scaled(get_smoother("gaussian"), 0.0, np.array([1.0]))


def test_weights_batch_matches_scalar():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 3))
    xbar = rng.normal(size=3)
    for name in boro.smoother_names():
        s = get_smoother(name)
        w = smoother_weights(s, 0.7, X, xbar)
        for i in range(20):
            assert w[i] == pytest.approx(evaluate_scaled(s, 0.7, X[i] - xbar), rel=1e-12, abs=1e-300)


def test_weights_dimension_guard():
    with pytest.raises(ValueError, match="dimension"):
        smoother_weights(get_smoother("gaussian"), 1.0, np.zeros((3, 2)), np.zeros(3))


class TestBandwidthRule:
    def test_hand_value(self):
        # per-coordinate population std exactly 2 with n = 100
        X = np.concatenate([np.full(50, -2.0), np.full(50, 2.0)])[:, None]
        data = boro.Dataset(X, np.zeros((100, 1)))
        assert boro.bandwidth_rule_of_thumb(data) == pytest.approx(2.0 * 100 ** -0.5)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            boro.bandwidth_rule_of_thumb(boro.Dataset(np.array([[1.0]]), np.array([[1.0]])))

    def test_degenerate_covariates(self):
        data = boro.Dataset(np.ones((5, 1)), np.arange(5.0)[:, None])
        with pytest.raises(ValueError, match="degenerate covariates"):
            boro.bandwidth_rule_of_thumb(data)

    def test_homogeneous_in_scale(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 2))
        data = boro.Dataset(X, np.zeros((40, 1)))
        c = 3.7
        scaled = boro.Dataset(c * X, np.zeros((40, 1)))
        assert boro.bandwidth_rule_of_thumb(scaled) == pytest.approx(
            c * boro.bandwidth_rule_of_thumb(data)
        )

    def test_unknown_smoother(self):
        with pytest.raises(ValueError, match="unknown smoother"):
            get_smoother("triangle")
