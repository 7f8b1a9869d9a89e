"""LP solve front end: options, solution container, backend dispatch."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ..formulation import LinearProgram, VariableRef
from .simplex import simplex

log = logging.getLogger(__name__)

__all__ = ["LpSolution", "SolveOptions", "Status", "solve_lp", "SolverError"]

# programs with more rows than this go to HiGHS when method="auto"
AUTO_SIMPLEX_MAX_ROWS = 2500


class SolverError(RuntimeError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL = "numerical"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"
    IMPORTED = "imported"


@dataclass(frozen=True)
class SolveOptions:
    """Solver tolerances and limits.

    ``method`` picks the LP engine: ``"simplex"`` (built-in revised simplex),
    ``"highs"`` (HiGHS dual simplex through scipy) or ``"auto"``, which uses
    the built-in engine up to ``AUTO_SIMPLEX_MAX_ROWS`` rows.
    """

    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-7
    mip_gap: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    iteration_limit: int | None = None
    branching: str = "most_fractional"
    node_order: str = "best_bound"
    method: str = "auto"
    milp_method: str = "bnb"

    def __post_init__(self):
        for name in ("feasibility_tol", "optimality_tol", "mip_gap", "integrality_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.method not in ("auto", "simplex", "highs"):
            raise ValueError(f"unknown LP method {self.method!r}")
        if self.milp_method not in ("bnb", "highs"):
            raise ValueError(f"unknown MILP method {self.milp_method!r}")
        if self.branching != "most_fractional" or self.node_order != "best_bound":
            raise ValueError("only most_fractional branching with best_bound order is supported")


@dataclass
class LpSolution:
    status: Status
    objective: float
    x: np.ndarray
    row_duals: np.ndarray
    reduced_costs: np.ndarray
    lp: LinearProgram = field(repr=False)
    iterations: int = 0
    method: str = ""
    solve_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def primal(self) -> dict[VariableRef, float]:
        return dict(zip(self.lp.columns, self.x.tolist()))

    @property
    def duals(self) -> dict[str, float]:
        return dict(zip(self.lp.row_names, self.row_duals.tolist()))

    @property
    def reduced_cost_map(self) -> dict[VariableRef, float]:
        return dict(zip(self.lp.columns, self.reduced_costs.tolist()))

    def value(self, ref: VariableRef) -> float:
        return float(self.x[self.lp.col_index[ref]])

    def dual(self, row_name: str) -> float:
        return float(self.row_duals[self.lp.row_index[row_name]])

    # certificates
    def primal_residual(self) -> float:
        """Largest violation of a row or column bound, in row/column units."""
        lo, hi = self.lp.row_bounds()
        act = self.lp.A @ self.x
        viol = np.concatenate([
            np.maximum(lo - act, 0), np.maximum(act - hi, 0),
            np.maximum(self.lp.lb - self.x, 0), np.maximum(self.x - self.lp.ub, 0),
        ])
        return float(viol.max()) if viol.size else 0.0

    def duality_gap(self) -> float:
        """|c.x - dual objective| with the dual objective built from the active bounds."""
        return abs(self.objective - self.dual_objective())

    def dual_objective(self) -> float:
        lo, hi = self.lp.row_bounds()
        y, d = self.row_duals, self.reduced_costs
        # positive multipliers price lower bounds, negative ones upper bounds
        row_b = np.where(y > 0, lo, hi)
        col_b = np.where(d > 0, self.lp.lb, self.lp.ub)
        terms = np.concatenate([y * np.where(y != 0, row_b, 0.0), d * np.where(d != 0, col_b, 0.0)])
        return float(np.sum(terms))

    def complementarity_residual(self) -> float:
        """max |multiplier * distance to the bound it prices|.

        A multiplier pricing an infinite bound has the wrong sign; its own
        magnitude is reported instead.
        """
        lo, hi = self.lp.row_bounds()
        act = self.lp.A @ self.x
        y, d = self.row_duals, self.reduced_costs
        with np.errstate(invalid="ignore"):
            row_gap = np.where(y > 0, act - lo, np.where(y < 0, hi - act, 0.0))
            col_gap = np.where(d > 0, self.x - self.lp.lb, np.where(d < 0, self.lp.ub - self.x, 0.0))
        mult = np.concatenate([y, d])
        gap = np.concatenate([row_gap, col_gap])
        vals = np.where(np.isinf(gap), np.abs(mult), np.abs(mult * gap))
        vals = np.nan_to_num(vals, nan=np.inf)
        return float(vals.max()) if vals.size else 0.0


def _pick_method(lp: LinearProgram, opts: SolveOptions) -> str:
    if opts.method != "auto":
        return opts.method
    return "simplex" if lp.n_rows <= AUTO_SIMPLEX_MAX_ROWS else "highs"


def solve_lp(lp: LinearProgram, opts: SolveOptions | None = None, lb=None, ub=None) -> LpSolution:
    """Solve the continuous relaxation of ``lp`` (integrality flags ignored).

    ``lb``/``ub`` override the column bounds without copying the program.
    """
    opts = opts or SolveOptions()
    lb = lp.lb if lb is None else lb
    ub = lp.ub if ub is None else ub
    method = _pick_method(lp, opts)
    t0 = time.perf_counter()
    if method == "simplex":
        sol = _solve_simplex(lp, lb, ub, opts)
    else:
        sol = _solve_highs(lp, lb, ub, opts)
    if sol.status is Status.OPTIMAL:
        lo, hi = lp.row_bounds()
        sol.row_duals = _clean_signs(sol.row_duals, lo, hi, opts.optimality_tol)
        sol.reduced_costs = _clean_signs(sol.reduced_costs, lb, ub, opts.optimality_tol)
    sol.solve_time = time.perf_counter() - t0
    log.debug("%s: %s obj=%.6f it=%d (%.3fs, %s)", lp, sol.status.value, sol.objective, sol.iterations, sol.solve_time, method)
    return sol


def _clean_signs(mult: np.ndarray, lo, hi, tol: float) -> np.ndarray:
    """Zero round-off multipliers that price an infinite bound."""
    wrong = ((mult > 0) & np.isneginf(lo)) | ((mult < 0) & np.isposinf(hi))
    small = np.abs(mult) <= tol
    return np.where(wrong & small, 0.0, mult)


def _solve_simplex(lp, lb, ub, opts) -> LpSolution:
    lo, hi = lp.row_bounds()
    res = simplex(
        lp.obj, lp.A, lo, hi, lb, ub,
        feas_tol=opts.feasibility_tol, opt_tol=opts.optimality_tol, max_iter=opts.iteration_limit,
    )
    status = Status(res.status)
    x = res.x
    if status is Status.OPTIMAL:
        # snap onto bounds that were met within tolerance
        x = np.clip(x, lb, ub)
    return LpSolution(status, float(lp.obj @ x), x, res.y, res.d, lp, res.iterations, "simplex")


def _solve_highs(lp, lb, ub, opts) -> LpSolution:
    A = lp.A
    eq = lp.sense == "="
    le = lp.sense == "<="
    ge = lp.sense == ">="
    ub_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(sign) @ A[ub_rows] if ub_rows.size else None
    b_ub = sign * lp.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = lp.rhs[eq_rows] if eq_rows.size else None
    bounds = np.column_stack([lb, ub])
    options = {
        "primal_feasibility_tolerance": opts.feasibility_tol,
        "dual_feasibility_tolerance": opts.optimality_tol,
        "presolve": True,
    }
    if opts.time_limit is not None:
        options["time_limit"] = opts.time_limit
    if opts.iteration_limit is not None:
        options["maxiter"] = opts.iteration_limit
    res = linprog(lp.obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds", options=options)
    status = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status, Status.NUMERICAL)
    n, m = lp.n_cols, lp.n_rows
    y = np.zeros(m)
    d = np.zeros(n)
    x = np.zeros(n) if res.x is None else np.asarray(res.x, dtype=float)
    if status is Status.OPTIMAL:
        if ub_rows.size:
            y[ub_rows] = sign * res.ineqlin.marginals
        if eq_rows.size:
            y[eq_rows] = res.eqlin.marginals
        d = res.lower.marginals + res.upper.marginals
    iters = int(getattr(res, "nit", 0) or 0)
    obj = float(lp.obj @ x) if res.x is not None else np.nan
    return LpSolution(status, obj, x, y, d, lp, iters, "highs")
