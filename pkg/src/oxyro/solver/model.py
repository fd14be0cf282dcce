"""Sparse linear / mixed-integer model container."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

INF = float("inf")

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = {"<=": LE, "<": LE, "le": LE, "==": EQ, "=": EQ, "eq": EQ, ">=": GE, ">": GE, "ge": GE}


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


class LpModel:
    """Linear program with bounded variables and sparse rows.

    Variables carry lower/upper bounds (``-inf``/``inf`` allowed), an
    objective coefficient and an optional integrality mark.  Rows are stored
    sparsely as ``(indices, coefficients, relation, rhs)``.
    """

    def __init__(self, sense: str = "min", name: str = "model"):
        if sense not in ("min", "max"):
            raise ModelError(f"sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self.name = name
        self.obj_offset = 0.0
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._int: list[bool] = []
        self.var_names: list[str] = []
        self.row_idx: list[np.ndarray] = []
        self.row_coef: list[np.ndarray] = []
        self.row_rel: list[str] = []
        self._rhs: list[float] = []
        self.row_names: list[str] = []

    # -- construction -----------------------------------------------------
    def add_var(self, lb: float = 0.0, ub: float = INF, obj: float = 0.0,
                integer: bool = False, name: Optional[str] = None) -> int:
        j = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        self._int.append(bool(integer))
        self.var_names.append(name if name is not None else f"x{j}")
        return j

    def add_vars(self, count: int, lb: float = 0.0, ub: float = INF, obj: float = 0.0,
                 integer: bool = False, prefix: str = "x") -> np.ndarray:
        return np.array([self.add_var(lb, ub, obj, integer, f"{prefix}[{k}]") for k in range(count)],
                        dtype=int)

    def add_row(self, idx: Sequence[int], coef: Sequence[float], rel: str, rhs: float,
                name: Optional[str] = None) -> int:
        try:
            rel = _RELATIONS[rel]
        except KeyError:
            raise ModelError(f"unknown relation {rel!r}") from None
        idx = np.asarray(idx, dtype=int)
        coef = np.asarray(coef, dtype=float)
        if idx.shape != coef.shape:
            raise ModelError("row indices and coefficients differ in length")
        # merge duplicate indices
        if idx.size and np.unique(idx).size != idx.size:
            uniq, inv = np.unique(idx, return_inverse=True)
            merged = np.zeros(uniq.size)
            np.add.at(merged, inv, coef)
            idx, coef = uniq, merged
        i = len(self._rhs)
        self.row_idx.append(idx)
        self.row_coef.append(coef)
        self.row_rel.append(rel)
        self._rhs.append(float(rhs))
        self.row_names.append(name if name is not None else f"r{i}")
        return i

    def set_bounds(self, j: int, lb: Optional[float] = None, ub: Optional[float] = None) -> None:
        if lb is not None:
            self._lb[j] = float(lb)
        if ub is not None:
            self._ub[j] = float(ub)

    def set_obj(self, j: int, value: float) -> None:
        self._obj[j] = float(value)

    def set_rhs(self, i: int, value: float) -> None:
        self._rhs[i] = float(value)

    # -- views ------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    @property
    def lb(self) -> np.ndarray:
        return np.array(self._lb, dtype=float)

    @property
    def ub(self) -> np.ndarray:
        return np.array(self._ub, dtype=float)

    @property
    def obj(self) -> np.ndarray:
        return np.array(self._obj, dtype=float)

    @property
    def rhs(self) -> np.ndarray:
        return np.array(self._rhs, dtype=float)

    @property
    def integer(self) -> np.ndarray:
        return np.array(self._int, dtype=bool)

    @property
    def is_mip(self) -> bool:
        return any(self._int)

    def dense_matrix(self) -> np.ndarray:
        A = np.zeros((self.num_rows, self.num_vars))
        for i, (idx, coef) in enumerate(zip(self.row_idx, self.row_coef)):
            A[i, idx] = coef
        return A

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return np.array([coef @ x[idx] for idx, coef in zip(self.row_idx, self.row_coef)])

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj @ x + self.obj_offset)

    def copy(self) -> "LpModel":
        m = LpModel(self.sense, self.name)
        m.obj_offset = self.obj_offset
        m._lb, m._ub, m._obj, m._int = list(self._lb), list(self._ub), list(self._obj), list(self._int)
        m.var_names = list(self.var_names)
        m.row_idx, m.row_coef = list(self.row_idx), list(self.row_coef)
        m.row_rel, m._rhs, m.row_names = list(self.row_rel), list(self._rhs), list(self.row_names)
        return m

    def validate(self) -> None:
        lb, ub = self.lb, self.ub
        bad = np.flatnonzero(lb > ub)
        if bad.size:
            j = int(bad[0])
            raise ModelError(f"variable {self.var_names[j]}: lb {lb[j]} > ub {ub[j]}")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
            raise ModelError("NaN bound")
        ints = self.integer
        if np.any(ints & ~(np.isfinite(lb) & np.isfinite(ub))):
            j = int(np.flatnonzero(ints & ~(np.isfinite(lb) & np.isfinite(ub)))[0])
            raise ModelError(f"integer variable {self.var_names[j]} needs finite bounds")
        n = self.num_vars
        for i, idx in enumerate(self.row_idx):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ModelError(f"row {self.row_names[i]} references a variable out of range")

    def violations(self, x: np.ndarray, tol: float = 1e-7) -> list[str]:
        """Names of bounds/rows violated by ``x`` beyond a scaled tolerance."""
        out = []
        lb, ub = self.lb, self.ub
        for j in np.flatnonzero(x < lb - tol * (1 + np.abs(lb))):
            out.append(f"{self.var_names[j]} < lb")
        for j in np.flatnonzero(x > ub + tol * (1 + np.abs(ub))):
            out.append(f"{self.var_names[j]} > ub")
        act = self.row_activity(x)
        for i, (a, rel, b) in enumerate(zip(act, self.row_rel, self._rhs)):
            t = tol * (1 + abs(b))
            if (rel == LE and a > b + t) or (rel == GE and a < b - t) or (rel == EQ and abs(a - b) > t):
                out.append(self.row_names[i])
        return out


# Integrality marks live on LpModel itself; the alias names the MILP role.
MilpModel = LpModel


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0
    bound: Optional[float] = None
    nodes: int = 0
    infeasible_rows: list[int] = field(default_factory=list)
    incumbent_history: list[float] = field(default_factory=list)
    bound_history: list[float] = field(default_factory=list)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, idx: Iterable[int] | int):
        if isinstance(idx, (int, np.integer)):
            return float(self.x[idx])
        return self.x[np.asarray(idx, dtype=int)]
