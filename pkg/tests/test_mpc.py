import math

import numpy as np
import pytest

from hjmpc import mpc, reachability, valuefn
from hjmpc.dynamics import DoubleIntegrator
from hjmpc.geometry import Circle
from hjmpc.grid import Grid, ValueField
from hjmpc.harness.scenario import Scenario
from hjmpc.trajopt import OPTIMAL, SolverOptions, USABLE

SMALL_GRID = (21, 21, 16, 7)


@pytest.fixture(scope="module")
def one_obstacle():
    sc = Scenario(obstacles=(Circle(0.0, 0.0, 0.6),), grid_counts=SMALL_GRID)
    field, report = reachability.solve_safety_value(sc.model, sc.grid(), sc)
    assert report.converged
    return sc, valuefn.SafetyOracle(field)


@pytest.fixture(scope="module")
def open_field():
    sc = Scenario(obstacles=(), grid_counts=(5, 5, 4, 3))
    return sc, valuefn.SafetyOracle(ValueField(sc.grid(), np.full(sc.grid().shape, 5.0)))


def test_config_contracts():
    with pytest.raises(ValueError):
        mpc.ControllerConfig("other", 10)
    with pytest.raises(ValueError):
        mpc.ControllerConfig("baseline", 10, controls_per_plan=10)
    with pytest.raises(ValueError):
        mpc.ControllerConfig("baseline", 10, warm_start="sideways")
    assert mpc.ControllerConfig("safety-value", 10).use_fallback
    assert not mpc.ControllerConfig("baseline", 10).use_fallback
    assert mpc.ControllerConfig("baseline", 10, fallback=True).use_fallback


def test_only_safety_value_plans_carry_a_terminal_constraint(one_obstacle):
    sc, oracle = one_obstacle
    x = [-2.0, 0.0, 0.0, 1.0]
    base = mpc.build_ocp(mpc.ControllerConfig("baseline", 10), sc, oracle, x)
    safe = mpc.build_ocp(mpc.ControllerConfig("safety-value", 10, margin=0.1), sc, oracle, x)
    assert base.n_terminal == 0 and safe.n_terminal == 1
    assert base.n_path == safe.n_path == 1 + 2


def test_plan_at_goal_in_open_field_stays_put(open_field):
    sc, oracle = open_field
    x = [sc.goal[0], sc.goal[1], 0.0, sc.speed[0]]
    for variant in mpc.VARIANTS:
        r = mpc.plan(mpc.ControllerConfig(variant, 20), sc, oracle, x)
        assert r.status in USABLE
        # turning is pointless and braking is blocked by the speed floor
        assert np.max(np.abs(r.controls[:, 0])) <= 1e-6
        cell = sc.grid().spacing[:2]
        assert np.all(np.abs(r.states[-1, :2] - sc.goal) <= cell)


def test_safety_value_plan_ends_above_margin(one_obstacle):
    sc, oracle = one_obstacle
    solver = SolverOptions()
    for x in ([-1.5, 0.0, 0.0, 1.5], [-1.2, 0.4, -0.3, 2.0], [0.0, -1.5, 1.4, 1.0]):
        for margin in (0.0, 0.2):
            assert oracle.value(x) >= margin
            cfg = mpc.ControllerConfig("safety-value", 20, margin=margin, solver=solver)
            r = mpc.plan(cfg, sc, oracle, x)
            if r.status == OPTIMAL:
                assert oracle.value(r.states[-1]) >= margin - 1e-4


def test_baseline_never_costs_more_than_safety_value(one_obstacle):
    sc, oracle = one_obstacle
    solver = SolverOptions()
    compared = 0
    for x in ([-1.5, 0.0, 0.0, 1.5], [-1.2, 0.4, -0.3, 2.0], [1.0, 1.0, 0.5, 1.0]):
        base = mpc.plan(mpc.ControllerConfig("baseline", 20, solver=solver), sc, oracle, x)
        safe = mpc.plan(mpc.ControllerConfig("safety-value", 20, margin=0.2, solver=solver), sc, oracle, x)
        if base.status == safe.status == OPTIMAL:
            compared += 1
            assert base.cost <= safe.cost + 1e-6
    assert compared >= 1


def test_warm_start_shifts_controls_and_repeats_the_last():
    prev = mpc.SolveResult(np.zeros((4, 4)), np.array([[1.0, 0], [2, 0], [3, 0]]), 0, 0, OPTIMAL, 0, 0,
                           np.zeros((3, 0)), np.zeros(0))
    assert np.array_equal(mpc._shifted(prev, 1, 3)[:, 0], [2, 3, 3])
    assert np.array_equal(mpc._shifted(prev, 2, 4)[:, 0], [3, 3, 3, 3])


def test_fallback_brakes_double_integrator():
    model = DoubleIntegrator()
    grid = Grid.from_bounds([-2, -2], [2, 2], (81, 81))
    l = reachability.field_from_function(grid, lambda s: s[..., 0])
    field, _ = reachability.solve_safety_value(model, grid, l)
    oracle = valuefn.SafetyOracle(field)
    for x in ([0.5, -1.0], [1.2, -0.4], [-0.3, -1.5]):
        assert np.array_equal(mpc.fallback_control(oracle, model, x), [1.0])


def test_fallback_with_flat_value_uses_lower_bounds(open_field):
    sc, oracle = open_field
    assert np.array_equal(mpc.fallback_control(oracle, sc.model, [0.3, 0.2, 0.1, 1.0]), sc.model.control_lo)


def test_fallback_turns_hard_when_heading_at_obstacle(one_obstacle):
    sc, oracle = one_obstacle
    u = mpc.fallback_control(oracle, sc.model, [-1.0, 0.05, 0.0, 2.0])
    assert abs(u[0]) == sc.turn_rate[1]
    u = mpc.fallback_control(oracle, sc.model, [0.05, -1.0, math.pi / 2, 2.0])
    assert abs(u[0]) == sc.turn_rate[1]


def test_open_field_rollout_is_safe_and_reaches_goal(open_field):
    sc, oracle = open_field
    for variant in mpc.VARIANTS:
        rec = mpc.run_rollout(mpc.ControllerConfig(variant, 10), sc, oracle, [1.0, 1.0, 0.5, 1.0], sc.steps)
        assert rec.safe and rec.goal_reached
        assert rec.fallback_count == 0


def test_rollout_record_shapes_and_cost(one_obstacle):
    sc, oracle = one_obstacle
    K = 60
    rec = mpc.run_rollout(mpc.ControllerConfig("safety-value", 10, controls_per_plan=3, margin=0.2),
                          sc, oracle, [-2.0, -0.3, 0.0, 1.0], K, seed=4)
    assert rec.states.shape == (K + 1, 4) and rec.controls.shape == (K, 2)
    assert rec.l_values.shape == rec.v_values.shape == (K + 1,)
    assert len(rec.plan_status) == mpc.plans_per_rollout(K, 3) == 20
    dist = np.hypot(rec.states[:, 0] - sc.goal[0], rec.states[:, 1] - sc.goal[1])
    assert rec.cost == pytest.approx(dist.sum())
    assert rec.safe == (rec.min_l >= 0)
    assert rec.seed == 4


def test_plan_count_follows_ceil_rule(one_obstacle):
    sc, oracle = one_obstacle
    rec = mpc.run_rollout(mpc.ControllerConfig("baseline", 10, controls_per_plan=4), sc, oracle,
                          [-2.0, -0.3, 0.0, 1.0], 10)
    assert len(rec.plan_status) == math.ceil(10 / 4)


def test_rollout_is_bit_identical_when_repeated(one_obstacle):
    sc, oracle = one_obstacle
    cfg = mpc.ControllerConfig("safety-value", 10, margin=0.2)
    a = mpc.run_rollout(cfg, sc, oracle, [-2.0, -0.3, 0.0, 1.0], 80, seed=1)
    b = mpc.run_rollout(cfg, sc, oracle, [-2.0, -0.3, 0.0, 1.0], 80, seed=1)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.controls.tobytes() == b.controls.tobytes()
    assert a.plan_status == b.plan_status and a.cost == b.cost


def test_safety_value_rollout_from_safe_start_stays_safe(one_obstacle):
    sc, oracle = one_obstacle
    x0 = [-2.0, -0.3, 0.0, 1.0]
    assert oracle.value(x0) >= 0.2
    rec = mpc.run_rollout(mpc.ControllerConfig("safety-value", 10, margin=0.2), sc, oracle, x0, sc.steps)
    assert rec.safe
