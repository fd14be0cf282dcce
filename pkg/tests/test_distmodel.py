import io
import itertools
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import linprog

from oxyro.distmodel import (
    CurveMismatchError, build_deterministic, export_solution, level_trajectory, solve_deterministic,
)
from oxyro.instance import (
    AsuSpec, ContinuousUser, DemandCurve, DemandData, DiscreteUser, Gasholder, Horizon, Instance,
    ObjectiveWeights, synthesize,
)

from factories import small_instance


def balanced_toy(gamma=(1.0, 2.0, 20.0)):
    # one ASU fixed at 100, one user consuming exactly 100 per period, holder at mid
    return Instance(Horizon(2, 15), (AsuSpec("A", 100, 100, 0),),
                    (ContinuousUser("U", 1.0, 1.0, 200, 0.0),), (),
                    Gasholder(100, 10, 90, 50, 50), ObjectiveWeights(*gamma))


def test_balanced_toy_has_no_penalties():
    sol = solve_deterministic(balanced_toy())
    assert sol.objective == pytest.approx(200.0)
    assert np.allclose(sol.delta_plus + sol.delta_minus, 0)
    assert np.allclose(sol.eps_plus + sol.eps_minus, 0)
    assert np.allclose(sol.level, 50)


def test_forced_shortage_is_penalised():
    inst = balanced_toy()
    inst = replace(inst, continuous_users=(ContinuousUser("U", 1.0, 1.0, 400, 0.0),))
    sol = solve_deterministic(inst)
    # need 200 more than supply over two periods; the holder may give 40 down to its floor
    assert sol.eps_minus.sum() == pytest.approx(160.0)
    assert sol.components[2] == pytest.approx(20.0 * 160.0)
    assert sol.level.min() >= inst.gasholder.level_min - 1e-7


def test_identical_scenarios_are_symmetric():
    rng = np.random.default_rng(3)
    inst = small_instance(rng, periods=5, scenarios=1)
    curve = inst.discrete_users[0].scenarios[0]
    twin = replace(inst, discrete_users=(DiscreteUser("D0", (curve, curve)),))
    a = solve_deterministic(twin, fix_y=0).objective
    b = solve_deterministic(twin, fix_y=1).objective
    assert a == pytest.approx(b, rel=1e-9)
    assert solve_deterministic(twin).objective == pytest.approx(a, rel=1e-9)


def test_curve_length_mismatch_rejected():
    inst = small_instance(np.random.default_rng(0), periods=4)
    data = DemandData.from_instance(inst)
    bad = replace(data, cont_nominal=data.cont_nominal[:, :3])
    with pytest.raises(CurveMismatchError):
        build_deterministic(inst, bad)


def test_dominant_deviation_weight_pins_level_to_mid():
    inst = balanced_toy((1.0, 1e6, 1e7))
    inst = replace(inst, asus=(AsuSpec("A", 80, 120, 40),), gasholder=Gasholder(100, 10, 90, 50, 70))
    sol = solve_deterministic(inst)
    # 70 -> 50 takes one period of 20 below demand; then stay balanced
    assert np.allclose(sol.level, 50, atol=1e-6)


@pytest.mark.parametrize("seed", range(8))
def test_invariants_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    inst = small_instance(rng, periods=6, scenarios=2, asus=2)
    sol = solve_deterministic(inst)
    assert sol.is_optimal
    g = inst.gasholder
    assert np.all(sol.level >= g.level_min - 1e-6) and np.all(sol.level <= g.level_max + 1e-6)
    # telescoped balance reproduces the level rows
    lv = level_trajectory(inst, sol.plan.omega, sol.demand, sol.eps_plus, sol.eps_minus)
    assert np.allclose(lv, sol.level)
    assert np.allclose(np.minimum(sol.delta_plus, sol.delta_minus), 0, atol=1e-6)
    assert np.allclose(np.minimum(sol.eps_plus, sol.eps_minus), 0, atol=1e-6)
    f1, f2, f3 = sol.components
    assert f1 - f2 - f3 == pytest.approx(sol.objective, abs=1e-6 * (1 + abs(sol.objective)))
    # ramp limits
    for r, a in enumerate(inst.asus):
        assert np.all(np.abs(np.diff(sol.plan.omega[r])) <= a.ramp_max + 1e-6)
    assert sol.plan.y.sum() == pytest.approx(1.0)


def _recourse_value(inst, omega, demand):
    """Best -gamma2*sum(delta) - gamma3*sum(eps) for fixed supply and demand (scipy LP)."""
    T = len(demand)
    g, w = inst.gasholder, inst.weights
    L = np.tril(np.ones((T, T)))
    base = g.level_init + L @ (omega.sum(axis=0) - demand)
    # columns: eps+ (T), eps- (T), delta+ (T), delta- (T); level = base - L eps+ + L eps-
    Z = np.zeros((T, T))
    I = np.eye(T)
    A = np.vstack([np.hstack([-L, L, Z, Z]), np.hstack([L, -L, Z, Z]),
                   np.hstack([-L, L, -I, Z]), np.hstack([L, -L, Z, -I])])
    b = np.concatenate([g.level_max - base, base - g.level_min, g.level_mid - base, base - g.level_mid])
    c = np.concatenate([np.full(2 * T, w.gamma3), np.full(2 * T, w.gamma2)])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * 4 * T, method="highs")
    return -res.fun


def test_three_period_toy_matches_grid_search():
    inst = Instance(Horizon(3, 15), (AsuSpec("A", 1000, 1400, 200),),
                    (ContinuousUser("BF", 0.8, 1.2, 3000, 0.0),),
                    (DiscreteUser("BOF", (DemandCurve((300, 500, 200), (0, 0, 0)),
                                          DemandCurve((100, 300, 700), (0, 0, 0)))),),
                    Gasholder(1000, 100, 900, 500, 300), ObjectiveWeights(1.0, 0.5, 5.0))
    sol = solve_deterministic(inst)
    data = DemandData.from_instance(inst)
    best = -np.inf
    levels = np.arange(1000, 1401, 100)
    for w in itertools.product(levels, repeat=3):
        if np.any(np.abs(np.diff(w)) > 200):
            continue
        for rho in (0.8, 0.9, 1.0, 1.1, 1.2):
            for s in (0, 1):
                y = np.eye(2)[s]
                demand = data.aggregate([rho], y)[0]
                om = np.array([w], float)
                best = max(best, om.sum() + _recourse_value(inst, om, demand))
    assert sol.objective == pytest.approx(best, abs=1e-6)


def test_export_has_one_row_per_period():
    inst = synthesize("low", 0)
    sol = solve_deterministic(inst)
    buf = io.StringIO()
    export_solution(inst, sol, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("period,omega_ASU1,omega_ASU2,demand,level")
    assert len(lines) == 33
