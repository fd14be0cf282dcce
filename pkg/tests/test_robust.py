import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from oxyro.distmodel import solve_deterministic
from oxyro.instance import DemandData, Gasholder
from oxyro.robust import (
    INFEASIBLE_SENTINEL, BudgetSet, budget_vector, check_feasibility_bound, conservative_deviation,
    feasible_choices, protection_levels, report_objective, solve_robust, worst_case_delta,
)
from oxyro.solver import LpModel, solve_lp

from factories import small_instance
from oracles import budget_vertices, normal_quantile, robust_vertex_oracle


def test_budget_first_period_value():
    bs = budget_vector(0.10, 0.40, 32)
    z = normal_quantile(0.90)
    assert bs.gamma[0] == pytest.approx(min(z + 1, 12.8), abs=1e-9)
    assert bs.gamma[0] == pytest.approx(2.2816, abs=1e-4)
    assert bs.gamma[31] == pytest.approx(z * np.sqrt(32) + 1, abs=1e-9)


def test_zero_cap_gives_zero_budget():
    assert budget_vector(0.2, 0.0, 10).gamma == (0.0,) * 10


def test_median_risk_level():
    assert budget_vector(0.5, 0.4, 5).gamma == pytest.approx((1.0,) * 5)
    assert budget_vector(0.5, 0.01, 5).gamma == pytest.approx((0.05,) * 5)


def test_zero_risk_uses_cap():
    assert budget_vector(0.0, 0.25, 8).gamma == pytest.approx((2.0,) * 8)


def test_budget_rejects_out_of_range():
    with pytest.raises(ValueError):
        budget_vector(0.7, 0.1, 4)
    with pytest.raises(ValueError):
        budget_vector(0.1, -0.1, 4)


def _delta_lp(gamma, dhat):
    # max dhat.xi, |xi| <= 1, sum |xi| <= gamma with xi = p - q, p, q in [0, 1]
    n = len(dhat)
    m = LpModel("max")
    p = [m.add_var(0, 1, d) for d in dhat]
    q = [m.add_var(0, 1, -d) for d in dhat]
    m.add_row(p + q, np.ones(2 * n), "<=", gamma)
    return solve_lp(m).objective


def test_delta_examples():
    assert worst_case_delta(0.0, [5, 3, 2]) == 0.0
    assert worst_case_delta(1.5, [5, 3, 2]) == pytest.approx(6.5)
    assert _delta_lp(1.5, [5, 3, 2]) == pytest.approx(6.5)
    assert worst_case_delta(3.0, [5, 3, 2]) == pytest.approx(10.0)
    assert worst_case_delta(7.0, [5, 3, 2]) == pytest.approx(10.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=8), st.floats(0, 10))
def test_greedy_delta_matches_lp(dhat, gamma):
    assert worst_case_delta(gamma, dhat) == pytest.approx(_delta_lp(gamma, dhat), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=1, max_size=5), st.floats(0, 6))
def test_greedy_delta_matches_vertex_max(dhat, gamma):
    d = np.array(dhat)
    best = max(float(d @ xi) for xi in budget_vertices(gamma, d.size))
    assert worst_case_delta(gamma, dhat) == pytest.approx(best, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1e4), st.floats(0, 1e4), st.floats(-1, 1))
def test_scaled_factor_lies_in_unit_interval(dbar, frac, u):
    dhat = min(frac, dbar)
    if dhat == 0:
        return
    d = dbar + u * dhat
    xi = (d - dbar) / dhat
    assert -1 - 1e-12 <= xi <= 1 + 1e-12


def test_feasibility_bound_cases():
    gas = Gasholder.from_capacity(100.0)
    half = gas.half_range
    assert check_feasibility_bound([0.0] * 4, [5.0] * 4, gas).ok
    assert check_feasibility_bound([1.0] * 4, [half, 0, 0, 0], gas).ok  # boundary
    rep = check_feasibility_bound([4.0] * 4, [15.0] * 4, gas)
    # cumulative protection 15, 30, 45, 60 crosses 40 at the third period
    assert [t for t, _ in rep.violations] == [3, 4]
    assert rep.violations[0][1] == pytest.approx(45.0)


@pytest.mark.parametrize("seed", range(6))
def test_zero_budget_equals_deterministic(seed):
    inst = small_instance(np.random.default_rng(seed), periods=5)
    rob = solve_robust(inst, budget=BudgetSet.constant(0.0, 5))
    det = solve_deterministic(inst)
    assert rob.objective == pytest.approx(det.objective, abs=1e-6 * (1 + abs(det.objective)))


@pytest.mark.parametrize("seed", range(6))
def test_zero_deviation_equals_deterministic(seed):
    inst = small_instance(np.random.default_rng(seed), periods=5).with_eta(0.0)
    rob = solve_robust(inst, budget=budget_vector(0.1, 0.4, 5))
    det = solve_deterministic(inst)
    assert rob.objective == pytest.approx(det.objective, abs=1e-6 * (1 + abs(det.objective)))


@pytest.mark.parametrize("seed", range(6))
def test_full_budget_equals_box_substitution(seed):
    inst = small_instance(np.random.default_rng(100 + seed), periods=5)
    data = DemandData.from_instance(inst)
    rob = solve_robust(inst, budget=BudgetSet(tuple(range(1, 6))))
    low = replace(data, cont_nominal=data.cont_nominal - data.cont_deviation,
                  disc_nominal=data.disc_nominal - data.disc_deviation)
    high = replace(data, cont_nominal=data.cont_nominal + data.cont_deviation,
                   disc_nominal=data.disc_nominal + data.disc_deviation)
    box = solve_deterministic(inst, upper_demand=low, lower_demand=high)
    assert rob.status == box.status
    if rob.is_optimal:
        assert rob.objective == pytest.approx(box.objective, abs=1e-6 * (1 + abs(box.objective)))


def _oracle_args(inst, rho, s):
    data = DemandData.from_instance(inst)
    y = np.eye(data.scenario_count)[s]
    dbar, dhat = data.aggregate(rho, y)
    g = inst.gasholder
    return (dbar, dhat, [(a.load_min, a.load_max, a.ramp_max) for a in inst.asus],
            (g.level_min, g.level_mid, g.level_max, g.level_init),
            (inst.weights.gamma1, inst.weights.gamma2, inst.weights.gamma3))


@pytest.mark.parametrize("seed", range(10))
def test_robust_matches_vertex_oracle(seed):
    rng = np.random.default_rng(500 + seed)
    T = int(rng.integers(2, 5))
    inst = small_instance(rng, periods=T, asus=int(rng.integers(1, 3)))
    budget = BudgetSet(tuple(rng.uniform(0, T + 0.5, size=T)))
    rho = [float(rng.uniform(0.8, 1.2))]
    s = int(rng.integers(0, 2))
    sol = solve_robust(inst, budget=budget, fix_rho=rho, fix_y=s)
    dbar, dhat, asus, gas, w = _oracle_args(inst, rho, s)
    expected = robust_vertex_oracle(dbar, dhat, budget.values, asus, gas, w)
    if expected is None:
        assert not sol.is_optimal
    else:
        assert sol.objective == pytest.approx(expected, abs=1e-6 * (1 + abs(expected)))


@pytest.mark.parametrize("seed", range(5))
def test_protection_equals_greedy_delta(seed):
    inst = small_instance(np.random.default_rng(900 + seed), periods=6, eta=0.1)
    sol = solve_robust(inst, budget=budget_vector(0.2, 0.5, 6))
    assert sol.is_optimal
    assert np.allclose(sol.protection, sol.delta, atol=1e-6 * (1 + sol.delta.max()))
    # linking rows hold at the solution
    _, dev = DemandData.from_instance(inst).aggregate(sol.plan.rho, sol.plan.y)
    for t in range(6):
        assert np.all(sol.beta[t] + sol.alpha[:t + 1, t] >= dev[:t + 1] - 1e-6)


def test_infeasible_robust_reports_period_and_sentinel_only_in_reports():
    inst = small_instance(np.random.default_rng(4), periods=6, eta=0.3)
    gas = inst.gasholder
    inst = replace(inst, gasholder=Gasholder(gas.capacity, 0.45 * gas.capacity, 0.55 * gas.capacity,
                                             0.5 * gas.capacity, 0.5 * gas.capacity))
    budget = BudgetSet.constant(6.0, 6)
    assert feasible_choices(inst, budget) == []
    sol = solve_robust(inst, budget=budget)
    assert sol.status == "infeasible"
    assert sol.objective is None
    assert "period" in sol.message
    assert report_objective(sol) == INFEASIBLE_SENTINEL


@pytest.mark.parametrize("seed", range(4))
def test_conservative_check_implies_feasible(seed):
    inst = small_instance(np.random.default_rng(70 + seed), periods=6, eta=0.05)
    budget = budget_vector(0.1, 0.4, 6)
    if check_feasibility_bound(budget, conservative_deviation(inst), inst.gasholder).ok:
        assert solve_robust(inst, budget=budget).is_optimal


def test_larger_budget_never_helps():
    inst = small_instance(np.random.default_rng(12), periods=6, eta=0.08)
    values = [solve_robust(inst, budget=budget_vector(0.1, b, 6)) for b in (0.0, 0.2, 0.4, 0.6, 0.8)]
    objs = [report_objective(v) for v in values]
    assert all(b <= a + 1e-6 * (1 + abs(a)) for a, b in zip(objs, objs[1:]))


def test_protection_levels_are_cumulative():
    d = protection_levels([1.0, 1.0, 2.0], [3.0, 5.0, 1.0])
    assert d == pytest.approx([3.0, 5.0, 8.0])
