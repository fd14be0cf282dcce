"""Self-contained LP (bounded primal simplex) and MILP (branch and bound) solver."""

from .lpformat import write_lp
from .milp import TimeLimitReached, solve_milp
from .model import EQ, GE, INF, LE, LpModel, LpSolution, MilpModel, ModelError
from .simplex import NumericalError, StandardForm, dual_objective, solve_lp


def solve(model: LpModel, **kwargs) -> LpSolution:
    """Dispatch to :func:`solve_milp` when any variable is integer-marked."""
    return solve_milp(model, **kwargs) if model.is_mip else solve_lp(model, **kwargs)


__all__ = [
    "EQ", "GE", "INF", "LE", "LpModel", "LpSolution", "MilpModel", "ModelError",
    "NumericalError", "StandardForm", "TimeLimitReached", "dual_objective",
    "solve", "solve_lp", "solve_milp", "write_lp",
]
