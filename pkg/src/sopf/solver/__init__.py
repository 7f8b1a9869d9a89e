"""LP/MILP solving, MPS interchange."""

from .lp import LpSolution, SolveOptions, SolverError, Status, solve_lp
from .milp import MilpSolution, fix_and_resolve, solve_milp
from .mps import export_mps, export_solution, import_solution, read_mps
from .simplex import simplex

__all__ = [
    "LpSolution",
    "MilpSolution",
    "SolveOptions",
    "SolverError",
    "Status",
    "export_mps",
    "export_solution",
    "fix_and_resolve",
    "import_solution",
    "read_mps",
    "simplex",
    "solve_lp",
    "solve_milp",
]
