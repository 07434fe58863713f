import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import grid_with_lambdas
from lambdafield.baseline import (
    BayesCell,
    BayesGrid,
    BayesModel,
    bayes_occupancy,
    bayes_update,
    lambda_occupancy,
    lambda_to_occupancy,
    limit_class,
    naive_joint_occupancy,
    occupancy_to_lambda,
    reachability,
    recall,
    recovery_slope_bayes,
    recovery_slope_lambda,
    time_reachability,
)
from lambdafield.field import GridConfig, LambdaGrid

SYM = BayesModel.symmetric(0.7)


def test_prior_is_half():
    assert BayesCell().occupancy == 0.5


@pytest.mark.parametrize("r, limit", [(0.4, 0.0), (0.6, 1.0), (0.5, 0.5)])
def test_limit_class_symmetric(r, limit):
    assert limit_class(r, SYM) == limit


def test_limit_class_asymmetric_model():
    model = BayesModel(l_o=2.0, l_f=-0.5)
    # balance point r* = 0.5 / 2.5 = 0.2
    assert limit_class(0.1, model) == 0.0
    assert limit_class(0.3, model) == 1.0
    with pytest.raises(ValueError):
        limit_class(1.5, model)


@pytest.mark.parametrize("r", [0.4, 0.6])
def test_interleaved_updates_reach_the_limit(r):
    cell = BayesCell()
    acc = 0.0
    for _ in range(400):
        acc += r
        hit = acc >= 1.0
        if hit:
            acc -= 1.0
        bayes_update(cell, hit, SYM)
    assert abs(cell.occupancy - limit_class(r, SYM)) < 1e-3


@settings(max_examples=100)
@given(st.lists(st.booleans(), max_size=200), st.floats(0.1, 3), st.floats(-3, -0.1), st.floats(1, 12))
def test_clamps_never_violated(seq, lo, lf, clamp):
    model = BayesModel(lo, lf, clamp)
    cell = BayesCell()
    for z in seq:
        bayes_update(cell, z, model)
        assert -clamp <= cell.log_odds <= clamp


def test_recovery_slopes():
    assert recovery_slope_bayes(0, SYM) == pytest.approx(SYM.l_o / 4)
    lf = abs(SYM.l_f)
    ratio = recovery_slope_bayes(50, SYM) / recovery_slope_bayes(10, SYM)
    expected = (math.cosh(10 * lf) + 1) / (math.cosh(50 * lf) + 1)
    assert ratio == pytest.approx(expected, rel=1e-12)
    assert ratio == pytest.approx(math.exp(-40 * lf), rel=1e-3)
    assert recovery_slope_lambda(50, 0.01, 0.01) == pytest.approx(0.02)
    assert recovery_slope_lambda(100, 0.01, 0.01) == pytest.approx(recovery_slope_lambda(50, 0.01, 0.01) / 2)
    with pytest.raises(ValueError):
        recovery_slope_lambda(0, 0.01, 0.01)


@pytest.mark.parametrize("m", [1, 10, 50])
def test_slopes_match_finite_differences(m):
    h = 1e-7
    fd = (bayes_occupancy(h, m, SYM) - bayes_occupancy(0, m, SYM)) / h
    assert fd == pytest.approx(recovery_slope_bayes(m, SYM), rel=1e-6)
    for da, e in [(0.01, 0.01), (0.01, 0.04)]:
        fd = (lambda_occupancy(h, m, da, e) - lambda_occupancy(0, m, da, e)) / h
        assert fd == pytest.approx(recovery_slope_lambda(m, da, e), rel=1e-6)


def test_unit_step_difference_agrees_for_a_weak_model():
    # a single whole hit is a first-order step only when l_o is small
    weak = BayesModel.symmetric(0.525)
    for m in (10, 50):
        fd = bayes_occupancy(1, m, weak) - bayes_occupancy(0, m, weak)
        assert fd == pytest.approx(recovery_slope_bayes(m, weak), rel=0.10)


def test_recovery_asymmetry_after_fifty_misses():
    h = np.arange(1, 200)
    lam = lambda_occupancy(h, 50, 0.01, 0.01)
    bay = bayes_occupancy(h, 50, SYM)
    ahead = lam > bay
    assert ahead[:5].all()
    # the lambda side leads until both reach 1/2 at h = 50, then falls behind
    assert ahead[h < 50].all()
    assert not ahead[h > 50].any()
    assert lam[h == 50][0] == pytest.approx(bay[h == 50][0], abs=1e-12)


# ---- conversions, reachability, recall


def test_conversions():
    assert occupancy_to_lambda(0.0) == 0.0
    assert occupancy_to_lambda(0.5) == pytest.approx(math.log(2))
    assert lambda_to_occupancy(math.log(2)) == pytest.approx(0.5)
    assert occupancy_to_lambda(1.0, lambda_max=1000.0) == 1000.0
    with pytest.raises(ValueError):
        occupancy_to_lambda(1.2)
    with pytest.raises(ValueError):
        occupancy_to_lambda(-0.1)


@settings(max_examples=200)
@given(st.floats(0, 0.999999))
def test_conversion_round_trip(p):
    assert lambda_to_occupancy(occupancy_to_lambda(p)) == pytest.approx(p, abs=1e-12)


def test_reachability_examples():
    assert reachability([0.0, 0.0], [1.0, 1.0]) == 1.0
    p, D, W = 0.2, 3.0, 1.0
    assert reachability(np.full(30, p), np.full(30, D * W / 30)) == pytest.approx((1 - p) ** (D * W))
    assert reachability([0.3, 1.0], [0.01, 0.01]) == 0.0


def test_tessellation_counterexample():
    # two unit cells of occupancy 0.1 versus the same area cut in four
    assert naive_joint_occupancy([0.1, 0.1]) == pytest.approx(0.19)
    assert naive_joint_occupancy([0.1] * 4) == pytest.approx(0.3439)
    coarse = reachability([0.1, 0.1], [1.0, 1.0])
    fine = reachability([0.1] * 4, [0.5] * 4)
    assert coarse == pytest.approx(0.81, abs=1e-12)
    assert fine == pytest.approx(coarse, abs=1e-12)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=50))
def test_reachability_bridge(lams):
    lam = np.asarray(lams)
    p = lambda_to_occupancy(lam)
    assert reachability(p, 0.01) == pytest.approx(math.exp(-0.01 * lam.sum()), abs=1e-12, rel=1e-12)


def test_bridge_is_limited_by_occupancy_precision():
    # 1 - p keeps only ~1e-16 absolute precision, so strong intensities
    # cannot be carried through an occupancy value
    lam = 40.0
    assert lambda_to_occupancy(lam) == 1.0
    assert reachability([lambda_to_occupancy(lam)], 0.01) == 0.0
    assert math.exp(-0.01 * lam) > 0.6


def test_time_reachability_rewards_speed():
    slow = time_reachability(0.1, 10.0, 0.5)
    fast = time_reachability(0.1, 10.0, 2.0)
    assert fast > slow
    assert fast == pytest.approx(0.9**5)


def test_recall_examples():
    g, cells = grid_with_lambdas([100 * math.log(2), 0.0, 0.0, 0.0])
    mean, std = recall(g, [cells], "lambda")
    assert mean == pytest.approx(0.5) and std == 0.0
    empty = LambdaGrid(GridConfig(width=10, height=10))
    assert recall(empty, [cells, cells[:2]], "lambda") == (1.0, 0.0)
    b = BayesGrid.like(g)
    b.log_odds[:] = -40.0
    assert recall(b, [cells], "bayes")[0] == pytest.approx(1.0)
    b.log_odds[:] = 40.0
    assert recall(b, [cells], "bayes")[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        recall(g, [], "lambda")


# ---- grid


def test_bayes_grid_matches_per_cell_updates():
    b = BayesGrid(0.1, 30, 30)
    b.integrate_beams([(0.05, 0.05)], [(0.45, 0.05)], [True])
    assert b.cell((4, 0)).log_odds == pytest.approx(SYM.l_o)
    for ix in range(4):
        assert b.cell((ix, 0)).log_odds == pytest.approx(SYM.l_f)


def test_bayes_grid_clamps_batched_updates():
    b = BayesGrid(0.1, 30, 30, BayesModel(2.0, -2.0, 5.0))
    o = np.zeros((10, 2)) + 0.05
    e = np.tile([0.45, 0.05], (10, 1))
    b.integrate_beams(o, e, np.ones(10, bool))
    assert b.cell((4, 0)).log_odds == 5.0
    assert b.cell((0, 0)).log_odds == -5.0


def test_tiny_occupancy_keeps_relative_precision():
    # after 50 misses the occupancy is about 4e-19; a tanh form rounds it to 0
    model = BayesModel()
    p = bayes_occupancy(0, 50, model)
    assert p == pytest.approx(math.exp(50 * model.l_f) / (1 + math.exp(50 * model.l_f)), rel=1e-12)
    assert 1 - bayes_occupancy(50, 0, model) == pytest.approx(p, rel=1e-3)
