"""Bounded-variable primal simplex on a dense, explicitly inverted basis.

Two-phase method.  Phase 1 minimises the sum of artificial variables that
are added only for rows whose slack starts outside its bounds; phase 2
optimises the true objective with the artificials fixed at zero.

Pricing is Dantzig (largest reduced cost) and falls back to Bland's rule
after ``3 * (rows + cols)`` iterations without objective progress.  The
basis inverse is updated by rank-one pivots and recomputed from scratch
every ``refactor_every`` pivots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import blas

from .model import EQ, GE, LE, LpModel, LpSolution

log = logging.getLogger(__name__)

TOL_FEAS = 1e-7
TOL_DUAL = 1e-9
TOL_PIVOT = 1e-9


class NumericalError(RuntimeError):
    """Simplex exceeded its iteration cap or lost numerical stability."""


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


@dataclass
class StandardForm:
    """Scaled dense arrays of an :class:`LpModel` in minimisation form.

    ``A' = diag(row_scale) A diag(col_scale)``; structural values map back as
    ``x = col_scale * x'`` and row duals as ``y = row_scale * y'``.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    rel: np.ndarray  # -1 for <=, 0 for ==, +1 for >=
    row_scale: np.ndarray
    col_scale: np.ndarray
    sign: float  # +1 for min, -1 for max (objective was negated)
    offset: float

    @classmethod
    def from_model(cls, model: LpModel, scale: bool = True) -> "StandardForm":
        model.validate()
        A = model.dense_matrix()
        m, n = A.shape
        b = model.rhs
        sign = 1.0 if model.sense == "min" else -1.0
        c = sign * model.obj
        rel = np.array([{LE: -1, EQ: 0, GE: 1}[r] for r in model.row_rel], dtype=int)
        r_s = np.ones(m)
        c_s = np.ones(n)
        if scale and m and n:
            absA = np.abs(A)
            for _ in range(2):
                with np.errstate(divide="ignore"):
                    big = absA.max(axis=1)
                    small = np.where(absA > 0, absA, np.inf).min(axis=1)
                    f = np.where(big > 0, 1.0 / np.sqrt(big * np.where(np.isfinite(small), small, big)), 1.0)
                f = _pow2(f)
                absA *= f[:, None]
                r_s *= f
                with np.errstate(divide="ignore"):
                    big = absA.max(axis=0)
                    small = np.where(absA > 0, absA, np.inf).min(axis=0)
                    g = np.where(big > 0, 1.0 / np.sqrt(big * np.where(np.isfinite(small), small, big)), 1.0)
                g = _pow2(g)
                absA *= g[None, :]
                c_s *= g
            A = A * r_s[:, None] * c_s[None, :]
        return cls(A=A, b=b * r_s, c=c * c_s, lb=model.lb / c_s, ub=model.ub / c_s, rel=rel,
                   row_scale=r_s, col_scale=c_s, sign=sign, offset=model.obj_offset)

    def scaled_bounds(self, lb: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return lb / self.col_scale, ub / self.col_scale


class _Simplex:
    """Working state of one solve.

    Columns are ``[A | I | artificials]``; slack and artificial columns are
    signed unit vectors, so pricing and column extraction only touch the
    sparse structural part, and refactorisation inverts just the block of
    the basis formed by structural columns and uncovered rows.
    """

    def __init__(self, A, b, c, lb, ub, rel, refactor_every=50, max_iter=None):
        m, n = A.shape
        self.m, self.n = m, n
        self.refactor_every = refactor_every
        slack_lb = np.where(rel > 0, -np.inf, 0.0)
        slack_ub = np.where(rel < 0, np.inf, 0.0)
        self.A = A
        self.Acsc = sparse.csc_matrix(A)
        self.At = sparse.csr_matrix(A.T)
        self.b = b
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 5000
        self.iterations = 0
        self.bland = False

        # nonbasic structurals start at a finite bound (or 0 if free)
        x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        resid = b - A @ x  # value the slack would need
        s = np.clip(resid, slack_lb, slack_ub)
        viol = resid - s
        art_rows = np.flatnonzero(np.abs(viol) > TOL_FEAS * (1.0 + np.abs(b)))
        self.art_rows = art_rows
        k = art_rows.size
        self.art_sign = np.sign(viol[art_rows])
        self.lb = np.concatenate([lb, slack_lb, np.zeros(k)])
        self.ub = np.concatenate([ub, slack_ub, np.full(k, np.inf)])
        self.cost2 = np.concatenate([c, np.zeros(m + k)])
        self.cost1 = np.concatenate([np.zeros(n + m), np.ones(k)])
        self.N = n + m + k
        # row and sign of every unit column (slacks then artificials)
        self.unit_row = np.concatenate([np.arange(m), art_rows])
        self.unit_sign = np.concatenate([np.ones(m), self.art_sign])

        self.x = np.concatenate([x, s, np.abs(viol[art_rows])])
        basis = n + np.arange(m)
        for t, i in enumerate(art_rows):
            basis[i] = n + m + t
        self.basis = basis
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    # -- column algebra ----------------------------------------------------
    def price(self, y: np.ndarray) -> np.ndarray:
        """y^T M for the full column set."""
        return np.concatenate([self.At @ y, y, self.art_sign * y[self.art_rows]])

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """M v."""
        out = self.Acsc @ v[:self.n] + v[self.n:self.n + self.m]
        np.add.at(out, self.art_rows, self.art_sign * v[self.n + self.m:])
        return out

    def ftran(self, j: int) -> np.ndarray:
        """B^-1 times column j."""
        if j < self.n:
            lo, hi = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
            return self.Binv[:, self.Acsc.indices[lo:hi]] @ self.Acsc.data[lo:hi]
        u = j - self.n
        return self.unit_sign[u] * self.Binv[:, self.unit_row[u]]

    # -- linear algebra ----------------------------------------------------
    def refactor(self) -> None:
        m, n = self.m, self.n
        pos = np.arange(m)
        is_struct = self.basis < n
        pk = pos[is_struct]
        pu = pos[~is_struct]
        K = self.basis[pk]
        u = self.basis[pu] - n
        urows, usign = self.unit_row[u], self.unit_sign[u]
        covered = np.zeros(m, dtype=bool)
        covered[urows] = True
        R = np.flatnonzero(~covered)
        if R.size != K.size or np.unique(urows).size != urows.size:
            raise NumericalError("singular basis at refactorisation")
        Binv = np.zeros((m, m), order="F")
        if K.size:
            try:
                Cinv = np.linalg.inv(self.A[np.ix_(R, K)])
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular basis at refactorisation") from exc
            Binv[np.ix_(pk, R)] = Cinv
            if pu.size:
                Binv[np.ix_(pu, R)] = -(self.A[np.ix_(urows, K)] @ Cinv) / usign[:, None]
        Binv[pu, urows] = 1.0 / usign
        self.Binv = Binv
        xn = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self.Binv @ (self.b - self.matvec(xn))
        self.since_refactor = 0

    # -- main loop ---------------------------------------------------------
    def run(self, cost: np.ndarray) -> str:
        """Iterate to optimality for ``cost``; returns 'optimal' or 'unbounded'."""
        m = self.m
        stall_limit = 3 * (self.m + self.n)
        best = np.inf
        stall = 0
        lb, ub = self.lb, self.ub
        dtol = TOL_DUAL * max(1.0, float(np.abs(cost).max(initial=0.0)))
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalError(f"simplex iteration cap {self.max_iter} exceeded")
            y = cost[self.basis] @ self.Binv if m else np.zeros(0)
            d = cost - self.price(y) if m else cost.copy()
            x = self.x
            nb = ~self.is_basic
            can_up = nb & (x < ub - TOL_FEAS) & (d < -dtol)
            can_dn = nb & (x > lb + TOL_FEAS) & (d > dtol)
            elig = can_up | can_dn
            if not elig.any():
                self.y, self.d = y, d
                return "optimal"
            if self.bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if can_up[j] else -1.0
            col = self.ftran(j) if m else np.zeros(0)
            a = direction * col
            xb = x[self.basis]
            lbb, ubb = lb[self.basis], ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(a > TOL_PIVOT, (xb - lbb) / a, np.inf)
                t_inc = np.where(a < -TOL_PIVOT, (ubb - xb) / -a, np.inf)
            ratios = np.maximum(np.minimum(t_dec, t_inc), 0.0)
            ratios = np.where(np.isnan(ratios), np.inf, ratios)
            t_row = float(ratios.min()) if m else np.inf
            t_enter = ub[j] - lb[j]
            if not np.isfinite(t_row) and not np.isfinite(t_enter):
                self.y, self.d = y, d
                self.unbounded_var = j
                return "unbounded"
            self.iterations += 1
            if t_enter <= t_row:
                # bound flip, basis unchanged
                x[self.basis] = xb - t_enter * a
                x[j] = ub[j] if direction > 0 else lb[j]
                step = t_enter
            else:
                ties = np.flatnonzero(ratios <= t_row + 1e-12 * (1.0 + t_row))
                if self.bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(a[ties]))])
                leave = self.basis[r]
                x[self.basis] = xb - t_row * a
                x[j] = x[j] + direction * t_row
                x[leave] = lb[leave] if a[r] > 0 else ub[leave]
                if not np.isfinite(x[leave]):
                    x[leave] = lbb[r] if np.isfinite(lbb[r]) else ubb[r]
                self._pivot(r, j, col)
                step = t_row
            obj = float(cost @ x)
            if obj < best - 1e-12 * (1.0 + abs(best if np.isfinite(best) else 0.0)) and step > 0:
                best = obj
                stall = 0
            else:
                stall += 1
                if not self.bland and stall > stall_limit:
                    log.debug("switching to Bland's rule after %d stalled iterations", stall)
                    self.bland = True

    def _pivot(self, r: int, j: int, col: np.ndarray) -> None:
        piv = col[r]
        leave = self.basis[r]
        self.is_basic[leave] = False
        self.is_basic[j] = True
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self.refactor()
            return
        row = self.Binv[r] / piv
        # in-place rank-one update: Binv -= col row^T, then row r := row
        self.Binv = blas.dger(-1.0, col, row, a=self.Binv, overwrite_a=True)
        self.Binv[r] = row

    def drive_out_artificials(self) -> None:
        """Pivot zero-valued artificials out of the basis where possible."""
        first_art = self.n + self.m
        for r in range(self.m):
            if self.basis[r] < first_art:
                continue
            row = np.concatenate([self.At @ self.Binv[r], self.Binv[r]])
            row = np.where(self.is_basic[:first_art], 0.0, row)
            jj = int(np.argmax(np.abs(row)))
            if abs(row[jj]) > 1e-7:
                self._pivot(r, jj, self.ftran(jj))
        self.refactor()


def solve_arrays(sf: StandardForm, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
                 refactor_every: int = 50, max_iter: Optional[int] = None) -> LpSolution:
    """Solve the scaled standard form, optionally with overridden (unscaled) bounds."""
    m, n = sf.A.shape
    if lb is None:
        slb, sub = sf.lb, sf.ub
    else:
        slb, sub = sf.scaled_bounds(np.asarray(lb, float), np.asarray(ub, float))
    if np.any(slb > sub + 1e-12 * (1 + np.abs(slb))):
        return LpSolution(status="infeasible")
    sub = np.maximum(sub, slb)
    spx = _Simplex(sf.A, sf.b, sf.c, slb, sub, sf.rel, refactor_every=refactor_every, max_iter=max_iter)
    k = spx.art_rows.size
    if k:
        spx.run(spx.cost1)
        art = spx.x[n + m:]
        scale = max(1.0, float(np.abs(sf.b).max(initial=0.0)))
        if art.sum() > TOL_FEAS * scale:
            bad = spx.art_rows[art > TOL_FEAS * scale]
            return LpSolution(status="infeasible", iterations=spx.iterations,
                              infeasible_rows=[int(i) for i in bad])
        spx.x[n + m:] = 0.0
        spx.ub[n + m:] = 0.0
        spx.drive_out_artificials()
        spx.bland = False
    status = spx.run(spx.cost2)
    if status == "unbounded":
        return LpSolution(status="unbounded", iterations=spx.iterations)
    # polish: fresh inverse, recompute basics and multipliers
    spx.refactor()
    if m:
        y = spx.cost2[spx.basis] @ spx.Binv
    else:
        y = np.zeros(0)
    d = spx.cost2 - spx.price(y) if m else spx.cost2.copy()
    xs = spx.x[:n]
    x = xs * sf.col_scale
    duals = sf.sign * y * sf.row_scale
    rc = sf.sign * d[:n] / sf.col_scale
    obj = sf.sign * float(sf.c @ xs) + sf.offset
    return LpSolution(status="optimal", x=x, objective=obj, duals=duals, reduced_costs=rc,
                      iterations=spx.iterations)


def solve_lp(model: LpModel, refactor_every: int = 50, max_iter: Optional[int] = None,
             scale: bool = True) -> LpSolution:
    """Solve the LP relaxation of ``model`` (integrality marks are ignored).

    Duals are reported as sensitivities of the objective (in the model's own
    sense) to each row's right-hand side.
    """
    sf = StandardForm.from_model(model, scale=scale)
    sol = solve_arrays(sf, refactor_every=refactor_every, max_iter=max_iter)
    return sol


def dual_objective(model: LpModel, sol: LpSolution) -> float:
    """Lagrangian dual value ``b.y + sum_j d_j x_j`` at a basic optimum."""
    return float(model.rhs @ sol.duals + sol.reduced_costs @ sol.x + model.obj_offset)
