import math

import numpy as np
import pytest

import boro
from boro.divergences import (
    bootstrap_distance,
    burg_distance,
    f_divergence,
    model_distance,
    pearson_distance,
    table_distance,
)
from boro.errors import UnsupportedDistance

LN2 = math.log(2.0)


def random_pair(rng, size):
    m = rng.dirichlet(np.ones(size))
    mref = rng.dirichlet(np.ones(size)) + 1e-3
    mref = mref / mref.sum()
    return m, mref


def test_identity_is_zero():
    w = np.array([0.2, 0.3, 0.5])
    assert bootstrap_distance(w, w) == pytest.approx(0.0, abs=1e-15)
    assert pearson_distance(w, w) == 0.0
    assert burg_distance(w, w) == pytest.approx(0.0, abs=1e-15)


def test_bootstrap_hand_value():
    val = bootstrap_distance([0.5, 0.5], [0.25, 0.75])
    assert val == pytest.approx(0.14384103622589045, abs=1e-12)


def test_bootstrap_point_mass():
    assert bootstrap_distance([1.0, 0.0], [0.5, 0.5]) == pytest.approx(LN2)


def test_zero_log_zero_convention():
    # the vanished atom contributes exactly nothing
    assert bootstrap_distance([0.0, 1.0], [0.5, 0.5]) == pytest.approx(LN2)


def test_pearson_hand_value():
    assert pearson_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(1.0 / 3.0)


def test_burg_infinite_on_vanished_atom():
    assert burg_distance([0.0, 1.0], [0.5, 0.5]) == math.inf


def test_f_divergence_recovers_bootstrap():
    rng = np.random.default_rng(0)
    f = lambda t: np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
    for _ in range(25):
        m, mref = random_pair(rng, 4)
        assert f_divergence(f, m, mref) == pytest.approx(bootstrap_distance(m, mref), abs=1e-12)


def test_f_divergence_recovers_pearson():
    rng = np.random.default_rng(1)
    f = lambda t: t**2 - 1.0
    for _ in range(25):
        m, mref = random_pair(rng, 5)
        assert f_divergence(f, m, mref) == pytest.approx(pearson_distance(m, mref), abs=1e-10)


def test_f_divergence_recovers_burg():
    rng = np.random.default_rng(2)
    f = lambda t: -np.log(t)
    for _ in range(25):
        m, mref = random_pair(rng, 3)
        m = m + 1e-3
        m = m / m.sum()
        assert f_divergence(f, m, mref) == pytest.approx(burg_distance(m, mref), abs=1e-10)


@pytest.mark.parametrize("kind", ["bootstrap", "pearson", "burg"])
def test_convexity_in_first_argument(kind):
    rng = np.random.default_rng(3)
    for _ in range(100):
        m1, mref = random_pair(rng, 4)
        m2, _ = random_pair(rng, 4)
        if kind == "burg":
            m1 = (m1 + 0.01) / (m1 + 0.01).sum()
            m2 = (m2 + 0.01) / (m2 + 0.01).sum()
        lam = rng.uniform()
        mix = lam * m1 + (1 - lam) * m2
        lhs = table_distance(kind, mix, mref)
        rhs = lam * table_distance(kind, m1, mref) + (1 - lam) * table_distance(kind, m2, mref)
        assert lhs <= rhs + 1e-9


@pytest.mark.parametrize("kind", ["bootstrap", "pearson", "burg"])
def test_discrimination(kind):
    rng = np.random.default_rng(4)
    for _ in range(50):
        _, mref = random_pair(rng, 4)
        delta = rng.normal(size=4) * 0.01
        delta -= delta.mean()
        m = mref + delta
        if np.any(m <= 0):
            continue
        d = table_distance(kind, m, mref)
        assert d >= 0.0
        if np.max(np.abs(m - mref)) > 1e-8:
            assert d > 0.0


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        bootstrap_distance([-0.1, 1.1], [0.5, 0.5])


def test_mismatched_support_rejected():
    with pytest.raises(ValueError):
        bootstrap_distance([0.5, 0.5], [0.3, 0.3, 0.4])


def test_wasserstein_declared_but_unsupported():
    d = model_distance("wasserstein")
    assert d.kind == "wasserstein"
    with pytest.raises(UnsupportedDistance):
        d.evaluate(np.array([1.0]), np.array([1.0]))
    with pytest.raises(UnsupportedDistance):
        table_distance("wasserstein", [1.0], [1.0])


def test_model_distance_factory():
    d = model_distance("bootstrap")
    assert d.kind == "bootstrap"
    assert d.evaluate([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384103622589045)
    with pytest.raises(ValueError):
        model_distance("hellinger")
