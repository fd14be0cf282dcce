"""Best-bound branch and bound over the simplex LP relaxation."""

from __future__ import annotations

import heapq
import math
import time
from typing import Optional

import numpy as np

from .model import LpModel, LpSolution
from .simplex import StandardForm, solve_arrays

TOL_INT = 1e-6
GAP_TOL = 1e-6


class TimeLimitReached(RuntimeError):
    """Branch and bound ran out of time; carries the incumbent and global bound."""

    def __init__(self, incumbent: Optional[LpSolution], bound: float):
        super().__init__(f"time limit reached (bound {bound:.6g}, incumbent "
                         f"{incumbent.objective if incumbent else None})")
        self.incumbent = incumbent
        self.bound = bound


def _gap(incumbent: float, bound: float) -> float:
    return abs(bound - incumbent) / max(1.0, abs(incumbent))


def solve_milp(model: LpModel, gap_tol: float = GAP_TOL, time_limit: Optional[float] = None,
               node_limit: int = 200_000) -> LpSolution:
    """Solve ``model`` honouring its integrality marks.

    Most-fractional branching, best-bound node selection with ties broken
    by lowest node index, so searches are reproducible.  Internally every
    node minimises; reported objective and bounds use the model's sense.
    """
    ints = np.flatnonzero(model.integer)
    sf = StandardForm.from_model(model)
    lb0, ub0 = model.lb, model.ub
    lb0[ints] = np.ceil(lb0[ints] - TOL_INT)
    ub0[ints] = np.floor(ub0[ints] + TOL_INT)
    if not ints.size:
        return solve_arrays(sf, lb0, ub0)

    sgn = 1.0 if model.sense == "min" else -1.0  # internal key = sgn * objective
    start = time.monotonic()
    best: Optional[LpSolution] = None
    best_key = math.inf
    inc_hist: list[float] = []
    bound_hist: list[float] = []
    iters = 0
    nodes = 0
    counter = 0
    heap: list[tuple] = []
    final_key = math.inf
    root = solve_arrays(sf, lb0, ub0)
    iters += root.iterations
    nodes += 1
    if root.status != "optimal":
        root.nodes = nodes
        return root
    heapq.heappush(heap, (sgn * root.objective, counter, lb0, ub0, root))
    while heap:
        key, _, lb, ub, sol = heapq.heappop(heap)
        global_key = key
        bound_hist.append(sgn * min(global_key, best_key))
        if best is not None and (key >= best_key - 1e-9 * max(1.0, abs(best_key))
                                 or _gap(best_key, key) <= gap_tol):
            final_key = key
            break
        if time_limit is not None and time.monotonic() - start > time_limit:
            raise TimeLimitReached(best, sgn * global_key)
        xi = sol.x[ints]
        frac = np.abs(xi - np.round(xi))
        if frac.max() <= TOL_INT:
            if key < best_key:
                best, best_key = sol, key
                inc_hist.append(sgn * key)
            continue
        # most fractional; argmax returns the lowest index on ties
        k = int(np.argmax(np.where(frac > TOL_INT, 0.5 - np.abs(xi - np.floor(xi) - 0.5), -1.0)))
        j = ints[k]
        v = sol.x[j]
        for lo, hi in ((lb[j], math.floor(v)), (math.ceil(v), ub[j])):
            if lo > hi:
                continue
            clb, cub = lb.copy(), ub.copy()
            clb[j], cub[j] = lo, hi
            child = solve_arrays(sf, clb, cub)
            iters += child.iterations
            nodes += 1
            if nodes > node_limit:
                raise TimeLimitReached(best, sgn * global_key)
            if child.status == "unbounded":
                child.nodes = nodes
                return child
            if child.status != "optimal":
                continue
            ckey = sgn * child.objective
            if best is not None and ckey >= best_key - 1e-9 * max(1.0, abs(best_key)):
                continue
            counter += 1
            heapq.heappush(heap, (ckey, counter, clb, cub, child))

    if best is None:
        return LpSolution(status="infeasible", iterations=iters, nodes=nodes)
    # polish: fix integers at their rounded values and resolve for clean values and duals
    lbf, ubf = lb0.copy(), ub0.copy()
    xr = np.round(best.x[ints])
    lbf[ints] = xr
    ubf[ints] = xr
    final = solve_arrays(sf, lbf, ubf)
    if final.status != "optimal":  # pragma: no cover - rounding within TOL_INT cannot cut off
        final = best
    else:
        final.x[ints] = xr
    final.iterations = iters + final.iterations
    final.nodes = nodes
    final.bound = sgn * min(best_key, final_key)
    final.incumbent_history = inc_hist
    final.bound_history = bound_hist
    return final
