"""Best-bound branch and bound over binary columns, and fixed-binary re-solves."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..formulation import LinearProgram, VariableRef
from .lp import LpSolution, SolveOptions, SolverError, Status, solve_lp

log = logging.getLogger(__name__)

__all__ = ["MilpSolution", "fix_and_resolve", "solve_milp"]


@dataclass
class MilpSolution:
    status: Status
    incumbent: LpSolution | None
    binaries: dict[VariableRef, int]
    bound: float
    gap: float
    node_count: int
    solve_time: float = 0.0
    method: str = "bnb"
    lp: LinearProgram = field(default=None, repr=False)

    @property
    def objective(self) -> float:
        return self.incumbent.objective if self.incumbent is not None else math.inf

    @property
    def x(self) -> np.ndarray:
        return self.incumbent.x

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def binary_assignment(self) -> dict[int, float]:
        idx = self.lp.col_index
        return {idx[ref]: float(v) for ref, v in self.binaries.items()}


def _relative_gap(obj: float, bound: float) -> float:
    if not math.isfinite(obj):
        return math.inf
    return max(0.0, (obj - bound) / max(1.0, abs(obj)))


def _normalize_assignment(lp: LinearProgram, binaries) -> dict[int, float]:
    out = {}
    idx = lp.col_index
    for key, v in dict(binaries).items():
        j = idx[key] if isinstance(key, VariableRef) else int(key)
        if not lp.integer[j]:
            raise SolverError(f"column {lp.columns[j].name} is not binary")
        out[j] = float(round(v))
    return out


def fix_and_resolve(lp: LinearProgram, binaries, opts: SolveOptions | None = None) -> LpSolution:
    """Fix every binary at ``binaries`` (refs or column indices) and solve the LP.

    The result carries valid duals for the fixed topology.
    """
    assign = _normalize_assignment(lp, binaries)
    missing = set(lp.binary_columns.tolist()) - set(assign)
    if missing:
        names = sorted(lp.columns[j].name for j in missing)
        raise SolverError(f"assignment misses {len(names)} binaries, e.g. {names[:3]}")
    fixed = lp.fix(assign)
    sol = solve_lp(fixed, opts)
    if sol.status is Status.INFEASIBLE:
        raise SolverError("program infeasible with the given binaries fixed")
    return sol


def solve_milp(
    lp: LinearProgram,
    opts: SolveOptions | None = None,
    incumbent_hint: dict | None = None,
) -> MilpSolution:
    """Solve a mixed-binary program.

    ``opts.milp_method="bnb"`` runs the built-in best-bound search, branching
    on the most fractional binary (ties to the lowest column index);
    ``"highs"`` hands the whole program to HiGHS. ``incumbent_hint`` is an
    optional binary assignment evaluated before the search to seed the
    upper bound.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    if opts.milp_method == "highs":
        out = _solve_highs_milp(lp, opts)
    else:
        out = _branch_and_bound(lp, opts, incumbent_hint, t0)
    out.solve_time = time.perf_counter() - t0
    return out


def _solve_highs_milp(lp: LinearProgram, opts: SolveOptions) -> MilpSolution:
    lo, hi = lp.row_bounds()
    options = {"mip_rel_gap": opts.mip_gap, "presolve": True}
    if opts.time_limit is not None:
        options["time_limit"] = opts.time_limit
    if opts.node_limit is not None:
        options["node_limit"] = opts.node_limit
    cons = [LinearConstraint(lp.A, lo, hi)] if lp.n_rows else []
    res = milp(lp.obj, integrality=lp.integer.astype(int), bounds=Bounds(lp.lb, lp.ub), constraints=cons, options=options)
    if res.x is None:
        status = Status.INFEASIBLE if res.status == 2 else Status.NUMERICAL
        return MilpSolution(status, None, {}, math.nan, math.inf, 0, method="highs", lp=lp)
    bins = {lp.columns[j]: int(round(res.x[j])) for j in lp.binary_columns}
    inc = fix_and_resolve(lp, bins, opts)
    bound = float(getattr(res, "mip_dual_bound", inc.objective))
    status = Status.OPTIMAL if res.status == 0 else Status.TIME_LIMIT
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    return MilpSolution(status, inc, bins, bound, _relative_gap(inc.objective, bound), nodes, method="highs", lp=lp)


def _branch_and_bound(lp, opts, hint, t0) -> MilpSolution:
    bins = lp.binary_columns
    int_tol = opts.integrality_tol
    counter = itertools.count()
    nodes = 0

    def solve_node(lb, ub) -> LpSolution:
        nonlocal nodes
        nodes += 1
        return solve_lp(lp, opts, lb=lb, ub=ub)

    incumbent: LpSolution | None = None
    inc_obj = math.inf

    def prune_level() -> float:
        # nodes whose bound reaches this cannot improve the incumbent by more than the gap
        return inc_obj - opts.mip_gap * max(1.0, abs(inc_obj)) if math.isfinite(inc_obj) else math.inf

    def try_incumbent(sol: LpSolution) -> None:
        nonlocal incumbent, inc_obj
        if sol.optimal and sol.objective < inc_obj:
            incumbent, inc_obj = sol, sol.objective
            log.debug("new incumbent %.6f after %d nodes", inc_obj, nodes)

    if hint is not None:
        assign = _normalize_assignment(lp, hint)
        lb, ub = lp.lb.copy(), lp.ub.copy()
        for j, v in assign.items():
            lb[j] = ub[j] = v
        sol = solve_node(lb, ub)
        if sol.optimal and _fractional(sol.x, bins, int_tol).size == 0:
            try_incumbent(sol)

    root = solve_node(lp.lb.copy(), lp.ub.copy())
    if root.status is Status.UNBOUNDED:
        return MilpSolution(Status.UNBOUNDED, None, {}, -math.inf, math.inf, nodes, lp=lp)
    if not root.optimal:
        if incumbent is None:
            return MilpSolution(Status.INFEASIBLE if root.status is Status.INFEASIBLE else root.status, None, {}, math.nan, math.inf, nodes, lp=lp)
    heap: list = []
    if root.optimal:
        heapq.heappush(heap, (root.objective, next(counter), lp.lb.copy(), lp.ub.copy(), root))
    best_bound = root.objective if root.optimal else inc_obj
    status = Status.OPTIMAL

    while heap:
        best_bound = heap[0][0]
        if best_bound >= prune_level():
            break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            status = Status.NODE_LIMIT
            break
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            status = Status.TIME_LIMIT
            break
        bound, _, lb, ub, sol = heapq.heappop(heap)
        frac = _fractional(sol.x, bins, int_tol)
        if frac.size == 0:
            try_incumbent(sol)
            continue
        # most fractional binary, lowest column index on ties
        dist = np.abs(sol.x[frac] - np.floor(sol.x[frac]) - 0.5)
        j = int(frac[np.argmin(dist)])
        for v in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = v
            child = solve_node(clb, cub)
            if not child.optimal or child.objective >= prune_level():
                continue
            if _fractional(child.x, bins, int_tol).size == 0:
                try_incumbent(child)
            else:
                heapq.heappush(heap, (child.objective, next(counter), clb, cub, child))
    else:
        best_bound = inc_obj

    if heap and status is Status.OPTIMAL:
        best_bound = min(heap[0][0], inc_obj)
    if incumbent is None:
        st = status if status is not Status.OPTIMAL else Status.INFEASIBLE
        return MilpSolution(st, None, {}, best_bound, math.inf, nodes, lp=lp)
    best_bound = min(best_bound, inc_obj)
    binaries = {lp.columns[j]: int(round(incumbent.x[j])) for j in bins}
    x = incumbent.x.copy()
    x[bins] = np.round(x[bins])
    incumbent.x = x
    return MilpSolution(status, incumbent, binaries, best_bound, _relative_gap(inc_obj, best_bound), nodes, lp=lp)


def _fractional(x: np.ndarray, bins: np.ndarray, tol: float) -> np.ndarray:
    v = x[bins]
    return bins[np.abs(v - np.round(v)) > tol]
