"""Monte-Carlo evaluation of fixed first-stage plans.

Every round draws a demand realization inside the uncertainty box, fixes
generation, adjustment rates and scenario choice from a plan, and solves
the recourse LP for the deviation and balance-control variables.  The
deterministic (DO) and robust (TSRO) plans of a case are evaluated on the
same realizations.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import truncnorm

from .distmodel import FirstStagePlan, solve_deterministic
from .instance import DemandData, Instance
from .robust import INFEASIBLE_SENTINEL, BudgetSet, solve_robust
from .solver import INF, LpModel, solve_lp

PENALTY_TOL = 1e-6
Z95 = 1.96


@dataclass(frozen=True)
class Realization:
    """Demand multipliers in [-1, 1]: realized = nominal + multiplier * deviation.

    ``cont`` has shape (continuous users, periods); ``disc`` has shape
    (discrete users, periods) and applies to whichever scenario is chosen.
    """

    cont: np.ndarray
    disc: np.ndarray

    def apply(self, data: DemandData) -> DemandData:
        return replace(data, cont_nominal=data.cont_nominal + self.cont * data.cont_deviation,
                       disc_nominal=data.disc_nominal + self.disc[:, None, :] * data.disc_deviation)

    def demand(self, data: DemandData, plan: FirstStagePlan) -> np.ndarray:
        return self.apply(data).aggregate(plan.rho, plan.y)[0]


def _draw(rng: np.random.Generator, shape) -> np.ndarray:
    # each draw: mean 0, std 1/2 (i.e. deviation/2), truncated at +-1; two draws averaged
    one = truncnorm.rvs(-2.0, 2.0, scale=0.5, size=shape, random_state=rng)
    two = truncnorm.rvs(-2.0, 2.0, scale=0.5, size=shape, random_state=rng)
    return 0.5 * (one + two)


def sample_realization(data: DemandData, seed, round_index: Optional[int] = None) -> Realization:
    """Truncated-normal multipliers; ``(seed, round_index)`` fully determines the draw."""
    key = [int(seed)] if round_index is None else [int(seed), int(round_index)]
    rng = np.random.default_rng(key)
    T = data.period_count
    cont = _draw(rng, (data.cont_nominal.shape[0], T))
    disc = _draw(rng, (data.disc_nominal.shape[0], T))
    return Realization(cont, disc)


class Recourse:
    """Recourse LP template for one instance; only right-hand sides change per call.

    Columns are eps+, eps-, delta+, delta- per period.  With
    ``E_t = sum_{k<=t} (eps-_k - eps+_k)`` and ``B_t`` the level without
    balance control, the rows read ``GVmin <= B_t + E_t <= GVmax``,
    ``delta+_t >= B_t + E_t - mid`` and ``delta-_t >= mid - B_t - E_t``.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        T = instance.horizon.period_count
        w = instance.weights
        m = LpModel("max", name="recourse")
        self.ep = m.add_vars(T, 0, INF, -w.gamma3, prefix="eplus")
        self.em = m.add_vars(T, 0, INF, -w.gamma3, prefix="eminus")
        self.dp = m.add_vars(T, 0, INF, -w.gamma2, prefix="dplus")
        self.dm = m.add_vars(T, 0, INF, -w.gamma2, prefix="dminus")
        self.rows = np.zeros((4, T), dtype=int)
        for t in range(T):
            idx = np.concatenate([self.em[:t + 1], self.ep[:t + 1]])
            coef = np.concatenate([np.ones(t + 1), -np.ones(t + 1)])
            self.rows[0, t] = m.add_row(idx, coef, "<=", 0.0, name=f"gvmax[{t + 1}]")
            self.rows[1, t] = m.add_row(idx, coef, ">=", 0.0, name=f"gvmin[{t + 1}]")
            self.rows[2, t] = m.add_row(np.concatenate([[self.dp[t]], idx]), np.concatenate([[1.0], -coef]),
                                        ">=", 0.0, name=f"devup[{t + 1}]")
            self.rows[3, t] = m.add_row(np.concatenate([[self.dm[t]], idx]), np.concatenate([[1.0], coef]),
                                        ">=", 0.0, name=f"devdn[{t + 1}]")
        self.model = m

    def solve(self, omega: np.ndarray, demand: np.ndarray) -> tuple[float, float, np.ndarray]:
        """Returns (objective, total balance control, level trajectory)."""
        g = self.instance.gasholder
        base = g.level_init + np.cumsum(np.asarray(omega).sum(axis=0) - demand)
        for t, b in enumerate(base):
            self.model.set_rhs(self.rows[0, t], g.level_max - b)
            self.model.set_rhs(self.rows[1, t], g.level_min - b)
            self.model.set_rhs(self.rows[2, t], b - g.level_mid)
            self.model.set_rhs(self.rows[3, t], g.level_mid - b)
        sol = solve_lp(self.model)
        if not sol.is_optimal:  # cannot happen: eps is unbounded above
            raise RuntimeError(f"recourse LP {sol.status}")
        x = sol.x
        eps = float(x[self.ep].sum() + x[self.em].sum())
        level = base + np.cumsum(x[self.em] - x[self.ep])
        f1 = self.instance.weights.gamma1 * float(np.sum(omega))
        return f1 + float(sol.objective), eps, level


def evaluate_plan(plan: FirstStagePlan, realization: Realization, instance: Instance,
                  data: Optional[DemandData] = None, recourse: Optional[Recourse] = None) -> float:
    """Objective f1 - f2 - f3 of ``plan`` after the best recourse under ``realization``."""
    data = DemandData.from_instance(instance) if data is None else data
    rec = Recourse(instance) if recourse is None else recourse
    return rec.solve(plan.omega, realization.demand(data, plan))[0]


@dataclass
class SimulationReport:
    method: str
    nominal: float
    values: np.ndarray  # per-round objective, by round index
    penalty_rounds: int  # rounds using any balance control (shortage or surplus)
    config: dict = field(default_factory=dict)
    feasible: bool = True

    @property
    def rounds(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    @property
    def ci(self) -> tuple[float, float]:
        h = Z95 * self.std / np.sqrt(self.rounds)
        return self.mean - h, self.mean + h

    @property
    def penalty_fraction(self) -> float:
        return self.penalty_rounds / self.rounds


@dataclass
class CaseResult:
    instance: str
    eta: float
    level_init: float
    do: SimulationReport
    tsro: SimulationReport

    @property
    def reports(self) -> tuple[SimulationReport, SimulationReport]:
        return self.do, self.tsro


def simulate_plans(instance: Instance, plans: dict[str, Optional[FirstStagePlan]],
                   nominal: dict[str, float], rounds: int, seed: int) -> dict[str, SimulationReport]:
    """Evaluate several plans on a common realization stream (``None`` plans get the sentinel)."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    data = DemandData.from_instance(instance)
    rec = Recourse(instance)
    vals = {k: np.full(rounds, INFEASIBLE_SENTINEL) for k in plans}
    pen = {k: 0 if p is not None else rounds for k, p in plans.items()}
    for r in range(rounds):
        real = sample_realization(data, seed, r)
        for k, plan in plans.items():
            if plan is None:
                continue
            f, eps, _ = rec.solve(plan.omega, real.demand(data, plan))
            vals[k][r] = f
            pen[k] += eps > PENALTY_TOL
    cfg = {"eta": _eta(instance), "level_init": instance.gasholder.level_init, "rounds": rounds, "seed": seed}
    return {k: SimulationReport(k, nominal[k], vals[k], int(pen[k]), dict(cfg), plans[k] is not None)
            for k in plans}


def _eta(instance: Instance) -> float:
    u = instance.continuous_users[0] if instance.continuous_users else None
    return float(u.deviation_total / u.nominal_total) if u and u.nominal_total else float("nan")


def run_case(instance: Instance, budget: BudgetSet, rounds: int, seed: int) -> CaseResult:
    """Solve DO and TSRO once and simulate both on the same realizations."""
    do = solve_deterministic(instance)
    if not do.is_optimal:
        raise RuntimeError(f"deterministic model {do.status} for {instance.name}")
    ro = solve_robust(instance, budget=budget)
    plans = {"DO": do.plan, "TSRO": ro.plan if ro.is_optimal else None}
    nominal = {"DO": do.objective, "TSRO": ro.objective if ro.is_optimal else INFEASIBLE_SENTINEL}
    reps = simulate_plans(instance, plans, nominal, rounds, seed)
    return CaseResult(instance.name, _eta(instance), instance.gasholder.level_init, reps["DO"], reps["TSRO"])


def run_comparison(instances: Sequence[Instance], budget: BudgetSet, etas: Sequence[Optional[float]],
                   level_fractions: Sequence[float], rounds: int, seed: int) -> list[CaseResult]:
    """All cases (instance x eta x initial level), each on common random numbers.

    An ``eta`` of ``None`` keeps the instance's own deviations.
    """
    out = []
    for inst in instances:
        for eta in etas:
            for frac in level_fractions:
                base = inst if eta is None else inst.with_eta(eta)
                case = base.with_initial_level(frac * inst.gasholder.capacity)
                out.append(run_case(case, budget, rounds, seed))
    return out


REPORT_HEADER = "instance,eta,level_init,method,nominal_f,sim_mean,sim_std,ci_low,ci_high,violations,rounds"


def write_report(cases: Sequence[CaseResult], out: io.TextIOBase) -> None:
    """Delimited rows, one per (case, method)."""
    out.write(REPORT_HEADER + "\n")
    for c in cases:
        for rep in c.reports:
            lo, hi = rep.ci
            out.write(f"{c.instance},{c.eta:.6g},{c.level_init:.6g},{rep.method},{rep.nominal:.10g},"
                      f"{rep.mean:.10g},{rep.std:.10g},{lo:.10g},{hi:.10g},{rep.penalty_rounds},{rep.rounds}\n")
