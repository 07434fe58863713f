import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lambdafield.baseline import BayesGrid
from lambdafield.field import GridConfig, LambdaGrid, SensorTrust
from lambdafield.planner import (
    REACHABILITY,
    Evaluation,
    Planner,
    PlannerConfig,
    evaluate,
    sample_commands,
    select,
    speed_at,
    sweep_cells,
    sweep_many,
    travel_distance,
)
from lambdafield.risk import FieldSnapshot
from lambdafield.sim import Command, RobotState, step

PERFECT = SensorTrust(1.0, 1.0)


def free_grid(cfg=None, misses=1e4):
    """Grid where every cell has been seen free ``misses`` times."""
    g = LambdaGrid(cfg or GridConfig(width=120, height=120))
    g.misses[:] = misses
    return g


def put_obstacle(g, cells, hits=1e4):
    ix, iy, inside = g.to_local(cells)
    g.hits[iy[inside], ix[inside]] = hits
    g.inv_error_sum[iy[inside], ix[inside]] = hits / g.config.default_error_area


def wall_cells(x0, y_lo, y_hi, S=0.1):
    ix = math.floor(x0 / S + 1e-9)
    return [(ix, iy) for iy in range(math.floor(y_lo / S), math.floor(y_hi / S))]


def robot(v=0.0, heading=0.0, pos=(0.0, 0.05), width=0.6):
    return RobotState(np.array(pos), heading, v, width=width)


# ---- configuration and sampling


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(horizon=2.0, duration=3.0)
    with pytest.raises(ValueError):
        PlannerConfig(max_upper=-1.0)
    with pytest.raises(ValueError):
        PlannerConfig(epsilon=1.0)
    with pytest.raises(ValueError):
        PlannerConfig(mode="astar")
    with pytest.raises(ValueError):
        PlannerConfig(samples=0)


def test_single_sample_is_stop():
    cmds = sample_commands(robot(0.3), PlannerConfig(samples=1), np.random.default_rng(0))
    assert len(cmds) == 1 and cmds[0].is_stop


def test_samples_respect_limits_and_seed():
    cfg = PlannerConfig(samples=500, kappa_max=0.7)
    r = robot(0.5)
    cmds = sample_commands(r, cfg, np.random.default_rng(3))
    assert cmds[0].is_stop and len(cmds) == 500
    speeds = np.array([c.target_speed for c in cmds[1:]])
    curv = np.array([c.curvature for c in cmds[1:]])
    assert speeds.max() <= r.v_max
    assert speeds.min() >= r.v_max - r.a_max * cfg.duration
    assert np.abs(curv).max() <= 0.7
    again = sample_commands(r, cfg, np.random.default_rng(3))
    assert again == cmds


# ---- kinematics


def test_travel_distance_matches_simulator_step():
    r = robot(0.2)
    for target in (0.0, 0.1, 0.2, 0.5):
        d = travel_distance(r.speed, target, r.a_max, 3.0)
        after = step(r, Command(target, 0.0), 3.0)
        assert d == pytest.approx(after.position[0] - r.position[0], abs=1e-12)


def test_speed_at_matches_slew():
    # accelerate 0 -> 0.5 at 0.05: v^2 = 2 a s
    s = np.array([0.0, 0.4, 1.0, 2.5, 10.0])
    v = speed_at(0.0, 0.5, 0.05, s)
    assert np.allclose(v, np.minimum(0.5, np.sqrt(0.1 * s)))
    v = speed_at(0.5, 0.0, 0.05, s)
    assert np.allclose(v, np.sqrt(np.maximum(0.25 - 0.1 * s, 0.0)))


# ---- sweeping


def test_zero_speed_empty_trace():
    t = sweep_cells(robot(0.0), Command(0.0, 0.3), 8.0, 0.1)
    assert len(t) == 0


def test_straight_unit_width_sweep():
    # 0.125 m/s for 8 s covers 1.0 m = 10 cells
    r = robot(0.125, width=0.1)
    t = sweep_cells(r, Command(0.125, 0.0), 8.0, 0.1)
    assert len(t) == 10
    assert np.allclose(t.abscissa, np.arange(10) * 0.1)
    assert [c.tolist() for c in t.cells] == [[[i, 0]] for i in range(10)]
    assert np.allclose(t.speed, 0.125)


def test_straight_three_cell_sweep():
    r = robot(0.125, width=0.3)
    t = sweep_cells(r, Command(0.125, 0.0), 8.0, 0.1)
    assert [len(c) for c in t.cells] == [3] * 10
    assert t.cells[0].tolist() == [[0, -1], [0, 0], [0, 1]]
    assert t.is_duplicate_free()


def test_sweep_rejects_short_horizon():
    with pytest.raises(ValueError):
        sweep_cells(robot(0.2), Command(0.2, 0.0, 3.0), 2.0, 0.1)


def test_batch_sweep_matches_single():
    r = robot(0.3, heading=0.4, pos=(0.37, -0.21))
    cmds = sample_commands(r, PlannerConfig(samples=20), np.random.default_rng(1))
    batch = sweep_many(r, cmds, 8.0, 0.1)
    for cmd, t in zip(cmds, batch):
        one = sweep_cells(r, cmd, 8.0, 0.1)
        assert np.array_equal(one.abscissa, t.abscissa)
        assert all(np.array_equal(a, b) for a, b in zip(one.cells, t.cells))


@settings(max_examples=60, deadline=None)
@given(
    v=st.floats(0.0, 0.5),
    target=st.floats(0.0, 0.5),
    kappa=st.floats(-1.0, 1.0),
    heading=st.floats(-math.pi, math.pi),
    x=st.floats(-1, 1),
    y=st.floats(-1, 1),
)
def test_sweep_properties(v, target, kappa, heading, x, y):
    r = RobotState(np.array([x, y]), heading, v)
    t = sweep_cells(r, Command(target, kappa), 8.0, 0.1)
    assert t.is_duplicate_free()
    if len(t):
        assert t.abscissa[0] == 0.0
        assert np.all(np.diff(t.abscissa) > 0)
        assert np.all((t.speed >= 0) & (t.speed <= r.v_max + 1e-12))
        length = travel_distance(v, target, r.a_max, 8.0)
        assert t.abscissa[-1] <= length + 1e-9


# ---- evaluation


def test_empty_grid_zero_risk():
    g = free_grid()
    cfg = PlannerConfig(goal=(3.0, 0.05))
    r = robot(0.5)
    cmd = Command(0.5, 0.0)
    t = sweep_cells(r, cmd, cfg.horizon, 0.1)
    ev = evaluate(t, FieldSnapshot(g, PERFECT), cfg, r, cmd)
    assert ev.expected == 0.0 and ev.upper == 0.0 and ev.feasible
    # distance is taken at the end of the 3 s command: 1.5 m travelled
    assert ev.distance == pytest.approx(1.5)


def test_stationary_stop_has_no_risk():
    g = free_grid()
    put_obstacle(g, wall_cells(0.05, -1.0, 1.0))
    r = robot(0.0)
    t = sweep_cells(r, Command(0.0, 0.0), 8.0, 0.1)
    ev = evaluate(t, FieldSnapshot(g, PERFECT), PlannerConfig(max_upper=0.0), r, Command(0.0, 0.0))
    assert ev.expected == 0.0 and ev.feasible


def test_horizon_sees_the_dead_end():
    g = free_grid()
    put_obstacle(g, wall_cells(2.0, -1.0, 1.0))
    r = robot(0.5)
    cmd = Command(0.5, 0.0)
    snap = FieldSnapshot(g, PERFECT)
    cfg = PlannerConfig(max_expected=0.0, max_upper=0.0)
    ev = evaluate(sweep_cells(r, cmd, 8.0, 0.1), snap, cfg, r, cmd)
    assert ev.expected > 0 and not ev.feasible
    # the command alone (3 s, 1.5 m) would not reach the wall
    short = PlannerConfig(horizon=3.0, max_expected=0.0, max_upper=0.0)
    ev3 = evaluate(sweep_cells(r, cmd, 3.0, 0.1), snap, short, r, cmd)
    assert ev3.expected == 0.0 and ev3.feasible


def test_reachability_mode():
    b = BayesGrid(0.1, 120, 120)
    b.log_odds[:] = -10.0
    cfg = PlannerConfig(mode=REACHABILITY, epsilon=0.1)
    r = robot(0.5)
    cmd = Command(0.5, 0.0)
    t = sweep_cells(r, cmd, 8.0, 0.1)
    ev = evaluate(t, None, cfg, r, cmd, bayes=b)
    assert ev.reachability > 0.99 and ev.feasible
    ix, iy, _ = b.to_local(wall_cells(2.0, -1.0, 1.0))
    b.log_odds[iy, ix] = 10.0
    ev = evaluate(t, None, cfg, r, cmd, bayes=b)
    assert ev.reachability < 0.9 and not ev.feasible
    with pytest.raises(ValueError):
        evaluate(t, None, cfg, r, cmd)


# ---- selection


def _ev(distance, expected=0.0, feasible=True):
    return Evaluation(expected, expected, expected, distance, feasible=feasible)


def test_select_rules():
    cfg = PlannerConfig()
    a, b, c = Command(0.3, 0.0), Command(0.2, 0.1), Command(0.1, -0.1)
    assert select([a, b], [_ev(1.0, feasible=False), _ev(2.0, feasible=False)], cfg)[0].is_stop
    assert select([a, b], [_ev(5.0, feasible=False), _ev(9.0)], cfg)[0] == b
    assert select([a, b], [_ev(2.0), _ev(1.0)], cfg)[0] == b
    # tie on distance: lower risk wins, then lower speed
    assert select([a, b], [_ev(1.0, 0.0), _ev(1.0, 0.5)], cfg)[0] == a
    assert select([a, b, c], [_ev(1.0), _ev(1.0), _ev(1.0)], cfg)[0] == c


def test_all_infeasible_stops():
    g = LambdaGrid(GridConfig(width=60, height=60))  # nothing measured
    r = robot(0.5)
    res = Planner(PlannerConfig(samples=40, goal=(3.0, 0.0)), trust=PERFECT).plan(r, g, np.random.default_rng(0))
    assert res.command.is_stop and res.feasible_count == 0 and res.evaluation is None


def test_planner_drives_toward_goal():
    g = free_grid()
    r = robot(0.3)
    res = Planner(PlannerConfig(samples=100, goal=(3.0, 0.0)), trust=PERFECT).plan(r, g, np.random.default_rng(0))
    assert res.evaluation.feasible
    assert res.command.target_speed > 0.3
    # the robot ends its command at least 1 m closer to the goal
    assert res.evaluation.distance < 2.0


def test_threshold_monotonicity():
    rng = np.random.default_rng(5)
    g = free_grid(misses=50)
    cells = [(int(x), int(y)) for x, y in rng.integers(-20, 40, size=(200, 2))]
    put_obstacle(g, cells, hits=rng.integers(1, 30, size=len(cells)))
    r = robot(0.3)
    cmds = sample_commands(r, PlannerConfig(samples=120), np.random.default_rng(0))
    traces = sweep_many(r, cmds, 8.0, 0.1)
    snap = FieldSnapshot(g)
    previous = None
    for cap in (20.0, 10.0, 5.0, 2.0, 0.5, 0.0):
        cfg = PlannerConfig(max_expected=100.0, max_upper=cap)
        feasible = {i for i, (t, c) in enumerate(zip(traces, cmds)) if evaluate(t, snap, cfg, r, c).feasible}
        if previous is not None:
            assert feasible <= previous
        previous = feasible


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_zero_threshold_soundness(seed):
    rng = np.random.default_rng(seed)
    g = free_grid(GridConfig(width=100, height=100), misses=20)
    # random obstacles and unmeasured holes
    occ = rng.integers(-30, 30, size=(80, 2))
    put_obstacle(g, occ, hits=5)
    holes = rng.integers(-30, 30, size=(40, 2))
    ix, iy, inside = g.to_local(holes)
    g.misses[iy[inside], ix[inside]] = 0
    r = robot(float(rng.uniform(0, 0.5)), heading=float(rng.uniform(-3, 3)))
    cfg = PlannerConfig(samples=60, max_expected=0.0, max_upper=0.0, goal=(2.0, 1.0))
    res = Planner(cfg, trust=PERFECT).plan(r, g, np.random.default_rng(seed))
    if res.evaluation is None:
        assert res.command.is_stop
        return
    t = res.traces[res.candidates.index(res.command)]
    cells, _ = t.flat()
    snap = FieldSnapshot(g, PERFECT)
    assert np.all(snap.intensities(cells, "point") == 0.0)
    assert np.all(snap.intensities(cells, "upper") == 0.0)
