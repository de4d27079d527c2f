import math

import numpy as np
import pytest

import boro
from boro.robust import contextual_cost_at_weights
from instances import CONST_LOSS, nw_learner, random_instance
from oracles import worst_case_oracle

Z0 = np.array([0.0])
LN2 = math.log(2.0)


def test_zero_radius_collapses_to_nominal():
    rng = np.random.default_rng(0)
    for _ in range(10):
        inst = random_instance(rng)
        model, xbar = inst["model"], inst["xbar"]
        lw = nw_learner(inst)
        if float(inst["s_w"] @ model.prob) <= 0:
            continue
        nominal = boro.nominal_contextual_cost(lw, CONST_LOSS, model, xbar, Z0)
        ev = boro.robust_nw_cost(boro.RobustConfig(radius=0.0), lw, CONST_LOSS, model, xbar, Z0)
        assert ev.cost == pytest.approx(nominal, abs=1e-12)


def test_two_point_closed_form_ceiling():
    # equal weights, losses {0, 1}: at radius log 2 all mass fits on the
    # worse point, so the cost hits 1 exactly
    data = boro.Dataset(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]))
    model = boro.empirical_model(data)
    lw = boro.NwLearner(boro.get_smoother("naive"), 1.0)
    ev = boro.robust_nw_cost(boro.RobustConfig(radius=LN2), lw, CONST_LOSS, model, [0.0], Z0)
    assert ev.cost == pytest.approx(1.0, abs=1e-10)
    assert ev.worst_case == pytest.approx([0.0, 1.0], abs=1e-10)
    # beyond the ceiling radius nothing changes
    ev2 = boro.robust_nw_cost(boro.RobustConfig(radius=3.0), lw, CONST_LOSS, model, [0.0], Z0)
    assert ev2.cost == pytest.approx(1.0, abs=1e-12)


def test_matches_primal_oracle():
    rng = np.random.default_rng(1)
    for trial in range(10):
        inst = random_instance(rng)
        model, s_w, ell, xbar = inst["model"], inst["s_w"], inst["ell"], inst["xbar"]
        if float(s_w @ model.prob) <= 0:
            continue
        lw = nw_learner(inst)
        for r in (0.01, 0.1, 0.5):
            ev = boro.robust_nw_cost(boro.RobustConfig(radius=r), lw, CONST_LOSS, model, xbar, Z0)
            oracle, _ = worst_case_oracle(model.prob, s_w, ell, r, seed=trial, restarts=60, iters=120)
            assert ev.cost == pytest.approx(oracle, abs=1e-5)


def test_monotone_in_radius():
    rng = np.random.default_rng(2)
    for _ in range(8):
        inst = random_instance(rng)
        model, xbar = inst["model"], inst["xbar"]
        lw = nw_learner(inst)
        if float(inst["s_w"] @ model.prob) <= 0:
            continue
        costs = [
            boro.robust_nw_cost(boro.RobustConfig(radius=r), lw, CONST_LOSS, model, xbar, Z0).cost
            for r in (0.0, 0.02, 0.1, 0.3, 1.0, 5.0)
        ]
        assert np.all(np.diff(costs) >= -1e-8)


def test_worst_case_certificate():
    rng = np.random.default_rng(3)
    for trial in range(10):
        inst = random_instance(rng)
        model, xbar = inst["model"], inst["xbar"]
        lw = nw_learner(inst)
        if float(inst["s_w"] @ model.prob) <= 0:
            continue
        for r in (0.05, 0.4):
            ev = boro.robust_nw_cost(boro.RobustConfig(radius=r), lw, CONST_LOSS, model, xbar, Z0)
            wc = ev.worst_case
            assert wc.sum() == pytest.approx(1.0, abs=1e-10)
            assert boro.bootstrap_distance(wc, model.prob) <= r + 1e-6
            re_cost = contextual_cost_at_weights(lw, CONST_LOSS, model, wc, xbar, Z0)
            assert re_cost == pytest.approx(ev.cost, abs=1e-5)


def test_worst_case_model_materializes():
    data = boro.Dataset(np.array([[0.0], [1.0]]), np.array([[0.0], [1.0]]))
    model = boro.empirical_model(data)
    lw = boro.NwLearner(boro.get_smoother("naive"), 1.0)
    ev = boro.robust_nw_cost(boro.RobustConfig(radius=LN2), lw, CONST_LOSS, model, [0.0], Z0)
    wc_model = ev.worst_case_model(model)
    assert wc_model.support_size == 1
    assert wc_model.prob[0] == 1.0


def test_cost_convex_in_decision():
    rng = np.random.default_rng(4)
    data = boro.Dataset(rng.normal(size=(8, 1)), rng.normal(100, 10, size=(8, 1)))
    model = boro.empirical_model(data)
    lw = boro.NwLearner(boro.get_smoother("gaussian"), 1.0)
    from boro.experiments import newsvendor_loss

    loss = newsvendor_loss()
    cfg = boro.RobustConfig(radius=0.1)
    xbar = np.array([0.0])
    for _ in range(20):
        z1, z2 = rng.normal(100, 15, size=2)
        lam = rng.uniform()
        mid = lam * z1 + (1 - lam) * z2
        c1 = boro.robust_nw_cost(cfg, lw, loss, model, xbar, [z1]).cost
        c2 = boro.robust_nw_cost(cfg, lw, loss, model, xbar, [z2]).cost
        cm = boro.robust_nw_cost(cfg, lw, loss, model, xbar, [mid]).cost
        assert cm <= lam * c1 + (1 - lam) * c2 + 1e-8


def test_pearson_generic_path():
    rng = np.random.default_rng(5)
    inst = random_instance(rng, smoothers=("gaussian", "naive"))
    model, xbar = inst["model"], inst["xbar"]
    lw = nw_learner(inst)
    nominal = boro.nominal_contextual_cost(lw, CONST_LOSS, model, xbar, Z0)
    prev = nominal
    for r in (0.01, 0.1, 0.5):
        ev = boro.robust_nw_cost(boro.RobustConfig(distance="pearson", radius=r),
                                 lw, CONST_LOSS, model, xbar, Z0)
        assert ev.cost >= prev - 1e-6
        assert boro.pearson_distance(ev.worst_case, model.prob) <= r + 1e-6
        prev = ev.cost
    # and the generic path agrees with the ascent oracle
    from boro.divergences import pearson_distance
    from oracles import worst_case_oracle_generic

    ov = worst_case_oracle_generic(model.prob, inst["s_w"], inst["ell"], 0.1,
                                   pearson_distance, seed=0)
    ev = boro.robust_nw_cost(boro.RobustConfig(distance="pearson", radius=0.1),
                             lw, CONST_LOSS, model, xbar, Z0)
    assert ev.cost == pytest.approx(ov, abs=1e-4)


def test_config_validation():
    with pytest.raises(ValueError):
        boro.RobustConfig(radius=0.1, target_b=0.1)
    with pytest.raises(ValueError):
        boro.RobustConfig()
    with pytest.raises(ValueError):
        boro.RobustConfig(radius=-1.0)
    with pytest.raises(ValueError):
        boro.RobustConfig(target_b=0.0)
    with pytest.raises(ValueError):
        boro.RobustConfig(distance="pearson", target_b=0.5)
