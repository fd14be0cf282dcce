import io
import math

import numpy as np
import pytest

from oxyro.solver import (
    INF, LpModel, ModelError, NumericalError, TimeLimitReached, dual_objective, solve_lp,
    solve_milp, write_lp,
)

from oracles import lp_vertex_oracle, milp_enumeration_oracle, random_lp


def build(c, A, rel, b, lb, ub, sense, n_int=0):
    m = LpModel(sense)
    for j in range(len(c)):
        m.add_var(lb[j], ub[j], c[j], integer=j < n_int)
    for a, r, bi in zip(A, rel, b):
        nz = np.flatnonzero(a)
        m.add_row(nz, a[nz], r, bi)
    return m


def kkt_residual(model, sol):
    """Largest scaled violation of primal feasibility, dual sign, slackness and stationarity."""
    x, y, d = sol.x, sol.duals, sol.reduced_costs
    A = model.dense_matrix()
    b, lb, ub, c = model.rhs, model.lb, model.ub, model.obj
    mx = 1.0 if model.sense == "max" else -1.0  # flips sign conventions for min
    worst = 0.0
    act = A @ x
    for i, rel in enumerate(model.row_rel):
        s = b[i] - act[i]
        scale = 1 + abs(b[i])
        if rel == "<=":
            worst = max(worst, -s / scale, -mx * y[i])
        elif rel == ">=":
            worst = max(worst, s / scale, mx * y[i])
        else:
            worst = max(worst, abs(s) / scale)
        worst = max(worst, abs(y[i] * s) / scale / (1 + abs(y[i])))
    with np.errstate(invalid="ignore"):
        below = np.nan_to_num((lb - x) / (1 + np.abs(lb)), nan=0.0, neginf=0.0)
        above = np.nan_to_num((x - ub) / (1 + np.abs(ub)), nan=0.0, neginf=0.0)
    worst = max(worst, below.max(initial=0), above.max(initial=0))
    worst = max(worst, np.max(np.abs(c - A.T @ y - d) / (1 + np.abs(c)), initial=0))
    for j in range(len(x)):
        at_lb = abs(x[j] - lb[j]) <= 1e-7 * (1 + abs(lb[j]))
        at_ub = abs(x[j] - ub[j]) <= 1e-7 * (1 + abs(ub[j]))
        if at_lb and at_ub:
            continue
        if at_lb:
            worst = max(worst, mx * d[j])   # max: d <= 0 at lb
        elif at_ub:
            worst = max(worst, -mx * d[j])  # max: d >= 0 at ub
        else:
            worst = max(worst, abs(d[j]))
    return worst


def test_single_bound_max():
    m = LpModel("max")
    x = m.add_var(0, INF, 1.0)
    m.add_row([x], [1.0], "<=", 3.0)
    sol = solve_lp(m)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(3.0)


def test_contradiction_is_infeasible():
    m = LpModel("min")
    x = m.add_var(-INF, INF, 0.0)
    m.add_row([x], [1.0], ">=", 2.0)
    m.add_row([x], [1.0], "<=", 1.0)
    assert solve_lp(m).status == "infeasible"


def test_unbounded_detected():
    m = LpModel("max")
    x = m.add_var(0, INF, 1.0)
    y = m.add_var(0, INF, 0.0)
    m.add_row([x, y], [1.0, -1.0], "<=", 1.0)
    assert solve_lp(m).status == "unbounded"


def test_free_variables_and_equalities():
    # min |shift| style: x free, x = 2.5 - z, z in [0, 1]
    m = LpModel("min")
    x = m.add_var(-INF, INF, 1.0)
    z = m.add_var(0, 1, 0.0)
    m.add_row([x, z], [1.0, 1.0], "==", 2.5)
    sol = solve_lp(m)
    assert sol.objective == pytest.approx(1.5)
    assert kkt_residual(m, sol) < 1e-7


@pytest.mark.parametrize("seed", range(60))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    mrows = int(rng.integers(1, 6))
    data = random_lp(rng, n, mrows)
    expected = lp_vertex_oracle(*data)
    model = build(*data)
    sol = solve_lp(model)
    if expected is None:
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(expected, abs=1e-6, rel=1e-6)
        assert kkt_residual(model, sol) < 1e-7
        primal = sol.objective
        assert abs(primal - dual_objective(model, sol)) <= 1e-6 * (1 + abs(primal))


def test_degenerate_lp_terminates():
    # classic Beale cycling example (cycles under naive Dantzig without anti-cycling)
    m = LpModel("min")
    x = [m.add_var(0, INF, c) for c in (-0.75, 150.0, -0.02, 6.0)]
    m.add_row(x, [0.25, -60.0, -0.04, 9.0], "<=", 0.0)
    m.add_row(x, [0.5, -90.0, -0.02, 3.0], "<=", 0.0)
    m.add_row([x[2]], [1.0], "<=", 1.0)
    sol = solve_lp(m, refactor_every=1000)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-0.05)


def test_iteration_cap_raises():
    m = LpModel("max")
    x = m.add_var(0, INF, 1.0)
    m.add_row([x], [1.0], "<=", 3.0)
    with pytest.raises(NumericalError):
        solve_lp(m, max_iter=0)


def test_invalid_bounds_rejected():
    m = LpModel("min")
    m.add_var(2.0, 1.0)
    with pytest.raises(ModelError):
        solve_lp(m)


def test_integer_needs_finite_bounds():
    m = LpModel("min")
    m.add_var(0, INF, 1.0, integer=True)
    with pytest.raises(ModelError):
        solve_milp(m)


def test_knapsack_forced_choice():
    m = LpModel("max")
    a = m.add_var(0, 1, 3.0, integer=True)
    b = m.add_var(0, 1, 2.0, integer=True)
    m.add_row([a, b], [1, 1], "<=", 1)
    sol = solve_milp(m)
    assert sol.objective == pytest.approx(3.0)
    assert list(sol.x) == [1.0, 0.0]


def test_network_flow_relaxation_is_integral():
    # transportation problem: 2 sources, 3 sinks; totally unimodular
    supply, demand = [4, 5], [3, 3, 3]
    cost = [[2, 4, 5], [3, 1, 7]]
    m = LpModel("min")
    x = {(i, j): m.add_var(0, 10, cost[i][j], integer=True) for i in range(2) for j in range(3)}
    for i in range(2):
        m.add_row([x[i, j] for j in range(3)], [1] * 3, "<=", supply[i])
    for j in range(3):
        m.add_row([x[i, j] for i in range(2)], [1] * 2, "==", demand[j])
    lp = solve_lp(m)
    mip = solve_milp(m)
    assert mip.objective == pytest.approx(lp.objective)


@pytest.mark.parametrize("seed", range(40))
def test_random_milp_matches_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    n_bin = int(rng.integers(2, 9))
    n_cont = int(rng.integers(0, 3))
    n = n_bin + n_cont
    c, A, rel, b, lb, ub, sense = random_lp(rng, n, int(rng.integers(1, 5)))
    lb[:n_bin], ub[:n_bin] = 0.0, 1.0
    x0 = rng.integers(0, 2, size=n_bin).astype(float)
    # re-centre rhs near an integer point so most instances are feasible
    full = np.concatenate([x0, np.zeros(n_cont)])
    b = np.round(A @ full + np.where(rel == "<=", 1.0, np.where(rel == ">=", -1.0, 0.0)), 3)
    expected = milp_enumeration_oracle(c, A, rel, b, lb, ub, sense, n_bin)
    sol = solve_milp(build(c, A, rel, b, lb, ub, sense, n_int=n_bin))
    if expected is None:
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(expected, abs=1e-6, rel=1e-6)
        assert np.all(np.abs(sol.x[:n_bin] - np.round(sol.x[:n_bin])) <= 1e-6)


def test_incumbents_monotone_and_bounds_valid():
    rng = np.random.default_rng(7)
    n = 12
    w = rng.integers(3, 20, size=n)
    v = rng.integers(3, 30, size=n)
    m = LpModel("min")  # min of negated value: incumbent must be nonincreasing
    xs = [m.add_var(0, 1, -float(v[j]), integer=True) for j in range(n)]
    m.add_row(xs, w, "<=", float(w.sum() // 2))
    m.add_row(xs[:6], [1] * 6, "<=", 3)
    sol = solve_milp(m)
    hist = sol.incumbent_history
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
    # weak duality: every popped bound never exceeds (min) the final optimum
    assert all(bd <= sol.objective + 1e-6 for bd in sol.bound_history)
    assert sol.bound <= sol.objective + 1e-6


def test_time_limit_carries_incumbent_and_bound():
    rng = np.random.default_rng(11)
    n = 30
    w = rng.integers(10, 60, size=n)
    m = LpModel("max")
    xs = [m.add_var(0, 1, float(w[j]) + rng.random(), integer=True) for j in range(n)]
    m.add_row(xs, w, "<=", float(w.sum()) / 2 + 0.5)
    with pytest.raises(TimeLimitReached) as info:
        solve_milp(m, time_limit=0.0)
    assert math.isfinite(info.value.bound)


def test_lp_export_lists_sections():
    m = LpModel("max", name="toy")
    a = m.add_var(0, 1, 3.0, integer=True, name="y[1]")
    b = m.add_var(-INF, INF, -1.0, name="free")
    m.add_row([a, b], [1, 2], "<=", 4, name="cap")
    buf = io.StringIO()
    write_lp(m, buf)
    text = buf.getvalue()
    for token in ("Maximize", "Subject To", "Bounds", "Generals", "End", "free free", "y_1_"):
        assert token in text
