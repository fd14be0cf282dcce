"""Budget-of-uncertainty protection for the distribution model.

Realized demand is ``d = dbar + xi * dhat`` with scaled factors ``|xi| <= 1``
and, for the rows of period ``t``, ``sum_{k<=t} |xi_k| <= Gamma_t``.  The
worst case of each level row is linearised through the dual of the inner
maximisation: columns ``beta_t`` and ``alpha[k,t]`` (k <= t) with

    beta_t + alpha[k,t] >= dhat_k(rho, y)

and protection ``P_t = Gamma_t * beta_t + sum_k alpha[k,t]`` added to all
four level rows of period ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .distmodel import (
    DistIndex, DistributionModel, DistributionSolution, build_deterministic, decode, solve_deterministic,
)
from .instance import DemandData, Gasholder, Instance
from .solver import INF, LpModel, solve

INFEASIBLE_SENTINEL = -2.0e6


@dataclass(frozen=True)
class BudgetSet:
    gamma: tuple[float, ...]
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if any(g < 0 for g in self.gamma):
            raise ValueError("budgets must be nonnegative")

    @property
    def values(self) -> np.ndarray:
        return np.array(self.gamma)

    @classmethod
    def constant(cls, value: float, period_count: int) -> "BudgetSet":
        return cls((float(value),) * period_count)


def budget_vector(a: float, b: float, period_count: int) -> BudgetSet:
    """Gamma_t = min(z_{1-a} sqrt(t) + 1, b * period_count) for t = 1..period_count."""
    if not 0.0 <= a <= 0.5:
        raise ValueError(f"risk level a must lie in [0, 0.5], got {a}")
    if b < 0:
        raise ValueError(f"cap coefficient b must be >= 0, got {b}")
    z = norm.ppf(1.0 - a)  # +inf at a = 0, so the cap decides
    t = np.arange(1, period_count + 1)
    with np.errstate(invalid="ignore"):
        raw = z * np.sqrt(t) + 1.0
    return BudgetSet(tuple(np.minimum(raw, b * period_count)), a, b)


def worst_case_delta(gamma: float, dhat: Sequence[float]) -> float:
    """max sum dhat*xi over |xi| <= 1, sum |xi| <= gamma (greedy; ties by lowest index)."""
    d = np.asarray(dhat, dtype=float)
    if gamma <= 0 or d.size == 0:
        return 0.0
    order = np.argsort(-d, kind="stable")
    k = min(int(math.floor(gamma)), d.size)
    total = float(d[order[:k]].sum())
    if k < d.size:
        total += (gamma - k) * float(d[order[k]])
    return total


def protection_levels(budget: BudgetSet | Sequence[float], dhat: Sequence[float]) -> np.ndarray:
    """Delta_t for every period from one aggregate deviation curve."""
    gamma = budget.values if isinstance(budget, BudgetSet) else np.asarray(budget, float)
    d = np.asarray(dhat, float)
    return np.array([worst_case_delta(gamma[t], d[:t + 1]) for t in range(len(d))])


@dataclass
class FeasibilityReport:
    delta: np.ndarray
    half_range: float
    violations: list[tuple[int, float]] = field(default_factory=list)  # (period, Delta)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_feasibility_bound(budget: BudgetSet | Sequence[float], dhat: Sequence[float],
                            gasholder: Gasholder, rtol: float = 1e-9) -> FeasibilityReport:
    """Require GV_max - Delta_t >= GV_min + Delta_t in every period (periods are 1-based)."""
    delta = protection_levels(budget, dhat)
    half = gasholder.half_range
    bad = [(t + 1, float(dv)) for t, dv in enumerate(delta) if dv > half * (1 + rtol)]
    return FeasibilityReport(delta, half, bad)


def conservative_deviation(instance: Instance, demand: Optional[DemandData] = None) -> np.ndarray:
    """Largest aggregate deviation curve any first-stage choice can produce."""
    data = DemandData.from_instance(instance) if demand is None else demand
    rmax = np.array([u.rate_max for u in instance.continuous_users])
    dev = rmax @ data.cont_deviation if data.cont_deviation.size else np.zeros(data.period_count)
    if data.scenario_count:
        dev = dev + data.scenario_deviation.max(axis=0)
    return dev


def feasible_choices(instance: Instance, budget: BudgetSet, demand: Optional[DemandData] = None
                     ) -> list[int]:
    """Scenarios for which some adjustment rates satisfy the protection bound.

    Deviations grow with every rate, so the rates' lower limits are the
    most permissive choice; the robust model is feasible iff this list is
    non-empty (or, with no discrete users, contains the single entry -1).
    """
    data = DemandData.from_instance(instance) if demand is None else demand
    rmin = np.array([u.rate_min for u in instance.continuous_users])
    base = rmin @ data.cont_deviation if data.cont_deviation.size else np.zeros(data.period_count)
    if not data.scenario_count:
        return [-1] if check_feasibility_bound(budget, base, instance.gasholder).ok else []
    return [s for s in range(data.scenario_count)
            if check_feasibility_bound(budget, base + data.scenario_deviation[s], instance.gasholder).ok]


@dataclass
class RobustSolution(DistributionSolution):
    alpha: Optional[np.ndarray] = None  # (periods, periods), alpha[k, t] for k <= t, zero above
    beta: Optional[np.ndarray] = None
    protection: Optional[np.ndarray] = None  # Gamma_t beta_t + sum_k alpha[k, t]
    delta: Optional[np.ndarray] = None  # greedy Delta_t at the solution's (rho, y)
    budget: Optional[BudgetSet] = None


def build_robust(instance: Instance, demand: Optional[DemandData] = None, budget: BudgetSet = None,
                 **kwargs) -> DistributionModel:
    """Deterministic model plus dual protection columns and linking rows."""
    data = DemandData.from_instance(instance) if demand is None else demand
    T = instance.horizon.period_count
    if budget is None or len(budget.gamma) != T:
        raise ValueError(f"budget must have {T} entries")
    gamma = budget.values
    cols: dict = {}

    def protect(m: LpModel, ix: DistIndex):
        beta = m.add_vars(T, 0, INF, 0.0, prefix="beta")
        alpha = np.full((T, T), -1, dtype=int)
        terms = []
        for t in range(T):
            for k in range(t + 1):
                alpha[k, t] = m.add_var(0, INF, 0.0, name=f"alpha[{k + 1},{t + 1}]")
            terms.append((np.concatenate([[beta[t]], alpha[:t + 1, t]]),
                          np.concatenate([[gamma[t]], np.ones(t + 1)])))
        # linking rows: beta_t + alpha[k,t] >= dhat_k(rho, y)
        for t in range(T):
            for k in range(t + 1):
                idx = np.concatenate([[beta[t], alpha[k, t]], ix.rho, ix.y])
                coef = np.concatenate([[1.0, 1.0], -data.cont_deviation[:, k],
                                       -data.scenario_deviation[:, k] if ix.y.size else np.zeros(0)])
                m.add_row(idx, coef, ">=", 0.0, name=f"link[{k + 1},{t + 1}]")
        cols["beta"], cols["alpha"] = beta, alpha
        return terms

    dm = build_deterministic(instance, data, protection=protect, **kwargs)
    dm.index.extra.update(cols)
    dm.index.extra["budget"] = budget
    return dm


def decode_robust(dm: DistributionModel, raw) -> RobustSolution:
    base = decode(dm, raw)
    out = RobustSolution(**{f: getattr(base, f) for f in base.__dataclass_fields__})
    budget = dm.index.extra["budget"]
    out.budget = budget
    if not base.is_optimal:
        return out
    x = raw.x
    beta_ix, alpha_ix = dm.index.extra["beta"], dm.index.extra["alpha"]
    T = len(beta_ix)
    alpha = np.where(alpha_ix >= 0, x[np.maximum(alpha_ix, 0)], 0.0)
    out.beta = x[beta_ix]
    out.alpha = alpha
    out.protection = budget.values * out.beta + alpha.sum(axis=0)
    _, dev = dm.demand.aggregate(out.plan.rho, out.plan.y)
    out.delta = protection_levels(budget, dev)
    return out


def solve_robust(instance: Instance, demand: Optional[DemandData] = None, budget: BudgetSet = None,
                 **kwargs) -> RobustSolution:
    """Solve the robust counterpart.  Infeasibility is reported through
    ``status`` and ``message``; no sentinel objective is stored here."""
    dm = build_robust(instance, demand, budget, **kwargs)
    out = decode_robust(dm, solve(dm.model))
    if not out.is_optimal:
        out.message = _first_violation(instance, dm.demand, budget)
    return out


def _first_violation(instance: Instance, data: DemandData, budget: BudgetSet) -> str:
    rmin = np.array([u.rate_min for u in instance.continuous_users])
    base = rmin @ data.cont_deviation if data.cont_deviation.size else np.zeros(data.period_count)
    curves = [base + data.scenario_deviation[s] for s in range(data.scenario_count)] or [base]
    firsts = []
    for dev in curves:
        rep = check_feasibility_bound(budget, dev, instance.gasholder)
        if rep.violations:
            firsts.append(rep.violations[0])
    if not firsts:
        return "robust model infeasible"
    t, dv = max(firsts)
    return (f"cumulative level bound violated at period {t}: protection {dv:.6g} exceeds "
            f"half range {instance.gasholder.half_range:.6g}")


def report_objective(sol: DistributionSolution) -> float:
    """Objective for experiment tables: the sentinel when the model is infeasible."""
    return float(sol.objective) if sol.is_optimal else INFEASIBLE_SENTINEL


GRID_STEPS = tuple(round(0.05 * k, 2) for k in range(11))


@dataclass
class BudgetGrid:
    a_values: np.ndarray
    b_values: np.ndarray
    objective: np.ndarray  # (len(a), len(b)); sentinel where infeasible
    feasible: np.ndarray

    def rows(self):
        for i, a in enumerate(self.a_values):
            for j, b in enumerate(self.b_values):
                yield float(a), float(b), float(self.objective[i, j]), bool(self.feasible[i, j])


def budget_grid(instance: Instance, a_values: Sequence[float] = GRID_STEPS,
                b_values: Sequence[float] = GRID_STEPS, demand: Optional[DemandData] = None) -> BudgetGrid:
    """Robust objective over a grid of (a, b).

    Cells failing the protection bound get the sentinel without a solve;
    cells sharing a budget vector share one solve.
    """
    data = DemandData.from_instance(instance) if demand is None else demand
    T = instance.horizon.period_count
    obj = np.full((len(a_values), len(b_values)), INFEASIBLE_SENTINEL)
    ok = np.zeros(obj.shape, dtype=bool)
    cache: dict[tuple[float, ...], float] = {}
    for i, a in enumerate(a_values):
        for j, b in enumerate(b_values):
            bs = budget_vector(a, b, T)
            key = tuple(np.round(bs.values, 12))
            if key not in cache:
                if feasible_choices(instance, bs, data):
                    cache[key] = report_objective(solve_robust(instance, data, bs))
                else:
                    cache[key] = INFEASIBLE_SENTINEL
            obj[i, j] = cache[key]
            ok[i, j] = cache[key] != INFEASIBLE_SENTINEL
    return BudgetGrid(np.asarray(a_values, float), np.asarray(b_values, float), obj, ok)


def ramp_sweep(instance: Instance, budget: BudgetSet, ramps: Sequence[float] = tuple(range(0, 501, 50))
               ) -> list[tuple[float, float, float]]:
    """(ramp limit, deterministic objective, robust objective) with the sentinel for infeasible models."""
    out = []
    for r in ramps:
        inst = instance.with_ramp(r)
        det = solve_deterministic(inst)
        out.append((float(r), report_objective(det), report_objective(solve_robust(inst, budget=budget))))
    return out
