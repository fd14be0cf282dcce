"""CPLEX-style LP text export, for cross-checking models in external solvers.

Layout (one item per line, sections in this order)::

    \\ comment
    Maximize | Minimize
     obj: 3 x0 + 2 x1 + 0 constant
    Subject To
     r0: x0 + x1 <= 1
    Bounds
     0 <= x0 <= 1
     x2 free
    Generals
     x0 x1
    End
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import TextIO, Union

from .model import LpModel

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _name(s: str) -> str:
    s = _BAD.sub("_", s)
    return s if s and not s[0].isdigit() else "v" + s


def _num(v: float) -> str:
    return repr(float(v))


def _terms(idx, coef, names) -> str:
    parts = []
    for j, a in zip(idx, coef):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def write_lp(model: LpModel, out: Union[str, Path, TextIO]) -> None:
    names = [_name(n) for n in model.var_names]
    # disambiguate after sanitising
    seen: dict[str, int] = {}
    for k, n in enumerate(names):
        if n in seen:
            names[k] = f"{n}_{k}"
        seen[names[k]] = k
    lines = [f"\\ {model.name}", "Maximize" if model.sense == "max" else "Minimize"]
    obj = model.obj
    nz = [j for j in range(model.num_vars) if obj[j] != 0]
    expr = _terms(nz, obj[nz], names) if nz else "0 " + names[0] if names else "0"
    if model.obj_offset:
        expr += f" + {_num(model.obj_offset)} constant" if model.obj_offset > 0 else \
            f" - {_num(-model.obj_offset)} constant"
    lines.append(f" obj: {expr}")
    lines.append("Subject To")
    for i in range(model.num_rows):
        rel = {"<=": "<=", "==": "=", ">=": ">="}[model.row_rel[i]]
        lines.append(f" {_name(model.row_names[i])}_{i}: "
                     f"{_terms(model.row_idx[i], model.row_coef[i], names)} {rel} {_num(model.rhs[i])}")
    lines.append("Bounds")
    for j, (lo, hi) in enumerate(zip(model.lb, model.ub)):
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {names[j]} free")
        elif lo == hi:
            lines.append(f" {names[j]} = {_num(lo)}")
        else:
            left = "-inf" if lo == -math.inf else _num(lo)
            right = "+inf" if hi == math.inf else _num(hi)
            lines.append(f" {left} <= {names[j]} <= {right}")
    ints = [names[j] for j in range(model.num_vars) if model.integer[j]]
    if ints:
        lines.append("Generals")
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if isinstance(out, (str, Path)):
        Path(out).write_text(text)
    else:
        out.write(text)
