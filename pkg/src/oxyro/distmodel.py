"""Deterministic flexible-demand oxygen distribution model.

The gasholder level is never a column: for period ``t`` it is the affine
expression

    GV_t = GV_0 + sum_{k<=t} (sum_r w[r,k] - d_k(rho, y) - eps+_k + eps-_k)

and every level-bearing row (capacity bounds and the two deviation rows) is
written directly in this cumulative form.  The demand ``d_k`` is linear in
the continuous adjustment rates ``rho`` and the scenario selector ``y``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .instance import DemandData, Instance
from .solver import INF, LpModel, LpSolution, solve

# extra linear terms per period, as (indices, coefficients), added to every level row
Protection = Sequence[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class FirstStagePlan:
    omega: np.ndarray  # (asus, periods)
    rho: np.ndarray  # (continuous users,)
    y: np.ndarray  # (scenarios,)

    @property
    def scenario(self) -> Optional[int]:
        return int(np.argmax(self.y)) if self.y.size else None


@dataclass
class DistributionSolution:
    status: str
    plan: Optional[FirstStagePlan] = None
    delta_plus: Optional[np.ndarray] = None
    delta_minus: Optional[np.ndarray] = None
    eps_plus: Optional[np.ndarray] = None
    eps_minus: Optional[np.ndarray] = None
    demand: Optional[np.ndarray] = None
    level: Optional[np.ndarray] = None
    objective: Optional[float] = None
    components: tuple[float, float, float] = (np.nan, np.nan, np.nan)
    message: str = ""
    raw: Optional[LpSolution] = field(default=None, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class DistIndex:
    """Column and row numbers of a built distribution model."""

    omega: np.ndarray
    omega_up: np.ndarray
    omega_dn: np.ndarray
    rho: np.ndarray
    y: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    eps_plus: np.ndarray
    eps_minus: np.ndarray
    row_min: np.ndarray
    row_max: np.ndarray
    row_dev_up: np.ndarray
    row_dev_dn: np.ndarray
    extra: dict = field(default_factory=dict)


@dataclass
class DistributionModel:
    model: LpModel
    index: DistIndex
    instance: Instance
    demand: DemandData


class CurveMismatchError(ValueError):
    pass


def _check(instance: Instance, demand: DemandData) -> None:
    T = instance.horizon.period_count
    Qn, Qe, S = len(instance.continuous_users), len(instance.discrete_users), instance.scenario_count
    if demand.cont_nominal.shape != (Qn, T) or demand.cont_deviation.shape != (Qn, T):
        raise CurveMismatchError(f"continuous curves must have shape {(Qn, T)}, "
                                 f"got {demand.cont_nominal.shape}")
    if demand.disc_nominal.shape != (Qe, S, T) or demand.disc_deviation.shape != (Qe, S, T):
        raise CurveMismatchError(f"discrete curves must have shape {(Qe, S, T)}, "
                                 f"got {demand.disc_nominal.shape}")


def _demand_terms(ix: DistIndex, data: DemandData, upto: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns and coefficients of the cumulative demand sum_{k<=upto} d_k(rho, y)."""
    idx = [ix.rho, ix.y]
    coef = [data.cont_nominal[:, :upto + 1].sum(axis=1),
            data.scenario_nominal[:, :upto + 1].sum(axis=1) if ix.y.size else np.zeros(0)]
    return np.concatenate(idx), np.concatenate(coef)


def build_deterministic(instance: Instance, demand: Optional[DemandData] = None, *,
                        fix_rho: Optional[Sequence[float]] = None, fix_y: Optional[int] = None,
                        upper_demand: Optional[DemandData] = None,
                        lower_demand: Optional[DemandData] = None,
                        protection: Optional[Callable[[LpModel, DistIndex], Protection]] = None,
                        ) -> DistributionModel:
    """Distribution MILP maximising gamma1*sum(w) - gamma2*sum(delta) - gamma3*sum(eps).

    ``demand`` defaults to the instance's own curves.  ``upper_demand``
    overrides the curves in the rows guarding against a high level (upper
    capacity and over-mid deviation) and ``lower_demand`` those guarding
    against a low level.  ``protection(model, index)`` may add columns and
    return one linear term per period that is added, with the tightening
    sign, to all four level rows of that period.
    """
    data = DemandData.from_instance(instance) if demand is None else demand
    _check(instance, data)
    hi = data if upper_demand is None else upper_demand
    lo = data if lower_demand is None else lower_demand
    _check(instance, hi)
    _check(instance, lo)
    T = instance.horizon.period_count
    w = instance.weights
    g = instance.gasholder
    m = LpModel("max", name=instance.name or "distribution")

    omega = np.array([[m.add_var(a.load_min, a.load_max, w.gamma1, name=f"w[{a.id},{t + 1}]")
                       for t in range(T)] for a in instance.asus], dtype=int).reshape(-1, T)
    up = np.array([[m.add_var(0, INF, 0.0, name=f"wup[{a.id},{t + 1}]") for t in range(1, T)]
                   for a in instance.asus], dtype=int).reshape(len(instance.asus), -1)
    dn = np.array([[m.add_var(0, INF, 0.0, name=f"wdn[{a.id},{t + 1}]") for t in range(1, T)]
                   for a in instance.asus], dtype=int).reshape(len(instance.asus), -1)
    rho = []
    for k, u in enumerate(instance.continuous_users):
        r = float(fix_rho[k]) if fix_rho is not None else None
        rho.append(m.add_var(u.rate_min if r is None else r, u.rate_max if r is None else r,
                             name=f"rho[{u.id}]"))
    rho = np.array(rho, dtype=int)
    S = data.scenario_count
    y = np.array([m.add_var(0, 1, integer=True, name=f"y[{s + 1}]") for s in range(S)], dtype=int)
    if fix_y is not None and S:
        for s in range(S):
            m.set_bounds(y[s], float(s == fix_y), float(s == fix_y))
    dp = m.add_vars(T, 0, INF, -w.gamma2, prefix="dplus")
    dm = m.add_vars(T, 0, INF, -w.gamma2, prefix="dminus")
    ep = m.add_vars(T, 0, INF, -w.gamma3, prefix="eplus")
    em = m.add_vars(T, 0, INF, -w.gamma3, prefix="eminus")
    ix = DistIndex(omega, up, dn, rho, y, dp, dm, ep, em,
                   np.zeros(T, int), np.zeros(T, int), np.zeros(T, int), np.zeros(T, int))

    for r, a in enumerate(instance.asus):
        for t in range(1, T):
            m.add_row([omega[r, t], omega[r, t - 1], up[r, t - 1], dn[r, t - 1]], [1, -1, -1, 1], "==", 0,
                      name=f"rampdef[{a.id},{t + 1}]")
            m.add_row([up[r, t - 1], dn[r, t - 1]], [1, 1], "<=", a.ramp_max, name=f"ramp[{a.id},{t + 1}]")
    if S:
        m.add_row(y, np.ones(S), "==", 1, name="scenario")

    prot = protection(m, ix) if protection is not None else None
    for t in range(T):
        # supply and balance-control part of GV_t - GV_0
        sidx = np.concatenate([omega[:, :t + 1].ravel(), ep[:t + 1], em[:t + 1]])
        scoef = np.concatenate([np.ones(omega.shape[0] * (t + 1)), -np.ones(t + 1), np.ones(t + 1)])
        pidx, pcoef = prot[t] if prot is not None else (np.zeros(0, int), np.zeros(0))
        didx_h, dcoef_h = _demand_terms(ix, hi, t)
        didx_l, dcoef_l = _demand_terms(ix, lo, t)
        hi_idx = np.concatenate([sidx, didx_h])
        hi_coef = np.concatenate([scoef, -dcoef_h])
        lo_idx = np.concatenate([sidx, didx_l])
        lo_coef = np.concatenate([scoef, -dcoef_l])
        ix.row_max[t] = m.add_row(np.concatenate([hi_idx, pidx]), np.concatenate([hi_coef, pcoef]), "<=",
                                  g.level_max - g.level_init, name=f"gvmax[{t + 1}]")
        ix.row_min[t] = m.add_row(np.concatenate([lo_idx, pidx]), np.concatenate([lo_coef, -pcoef]), ">=",
                                  g.level_min - g.level_init, name=f"gvmin[{t + 1}]")
        ix.row_dev_up[t] = m.add_row(np.concatenate([[dp[t]], hi_idx, pidx]),
                                     np.concatenate([[1.0], -hi_coef, -pcoef]), ">=",
                                     g.level_init - g.level_mid, name=f"devup[{t + 1}]")
        ix.row_dev_dn[t] = m.add_row(np.concatenate([[dm[t]], lo_idx, pidx]),
                                     np.concatenate([[1.0], lo_coef, -pcoef]), ">=",
                                     g.level_mid - g.level_init, name=f"devdn[{t + 1}]")
    return DistributionModel(m, ix, instance, data)


def level_trajectory(instance: Instance, omega: np.ndarray, demand: np.ndarray,
                     eps_plus: np.ndarray, eps_minus: np.ndarray) -> np.ndarray:
    """Gasholder level at the end of every period."""
    flow = np.asarray(omega).sum(axis=0) - demand - eps_plus + eps_minus
    return instance.gasholder.level_init + np.cumsum(flow)


def objective_parts(instance: Instance, omega, delta_plus, delta_minus, eps_plus, eps_minus):
    w = instance.weights
    return (w.gamma1 * float(np.sum(omega)),
            w.gamma2 * float(np.sum(delta_plus) + np.sum(delta_minus)),
            w.gamma3 * float(np.sum(eps_plus) + np.sum(eps_minus)))


def decode(dm: DistributionModel, sol: LpSolution) -> DistributionSolution:
    if not sol.is_optimal:
        return DistributionSolution(status=sol.status, raw=sol)
    ix, x = dm.index, sol.x
    rho = x[ix.rho]
    y = np.round(x[ix.y]) if ix.y.size else np.zeros(0)
    plan = FirstStagePlan(x[ix.omega], rho, y)
    demand, _ = dm.demand.aggregate(rho, y)
    ep, em = x[ix.eps_plus], x[ix.eps_minus]
    parts = objective_parts(dm.instance, plan.omega, x[ix.delta_plus], x[ix.delta_minus], ep, em)
    return DistributionSolution(
        status="optimal", plan=plan, delta_plus=x[ix.delta_plus], delta_minus=x[ix.delta_minus],
        eps_plus=ep, eps_minus=em, demand=demand,
        level=level_trajectory(dm.instance, plan.omega, demand, ep, em),
        objective=float(sol.objective), components=parts, raw=sol)


def solve_deterministic(instance: Instance, demand: Optional[DemandData] = None, **kwargs) -> DistributionSolution:
    """Build and solve the deterministic model; the result carries the level trajectory."""
    dm = build_deterministic(instance, demand, **kwargs)
    out = decode(dm, solve(dm.model))
    if not out.is_optimal:
        out.message = "deterministic model is " + out.status
    return out


def export_solution(instance: Instance, sol: DistributionSolution, out: io.TextIOBase) -> None:
    """Delimited per-period rows: period, generation per ASU, demand, level, deviations, penalties."""
    ids = [a.id for a in instance.asus]
    out.write(",".join(["period", *[f"omega_{i}" for i in ids], "demand", "level",
                        "delta_plus", "delta_minus", "eps_plus", "eps_minus"]) + "\n")
    for t in range(instance.horizon.period_count):
        vals = [*sol.plan.omega[:, t], sol.demand[t], sol.level[t], sol.delta_plus[t],
                sol.delta_minus[t], sol.eps_plus[t], sol.eps_minus[t]]
        out.write(",".join([str(t + 1), *(f"{v:.6g}" for v in vals)]) + "\n")
