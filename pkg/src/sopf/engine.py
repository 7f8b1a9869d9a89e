"""End-to-end model runs: build, solve, decode, price, settle, verify."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .dispatch import DispatchResult, decode_dispatch
from .economics import LmpVector, SettlementReport, nodal_lmps, settlement
from .formulation import BuildOptions, LinearProgram, ModelKind, build_model
from .network import PowerSystemCase
from .solver import (
    LpSolution,
    MilpSolution,
    SolveOptions,
    Status,
    fix_and_resolve,
    solve_lp,
    solve_milp,
)
from .verifier import ViolationReport, check_dispatch

log = logging.getLogger(__name__)

__all__ = ["ModelRun", "run_model", "run_models", "relaxation_chain_ok"]


@dataclass
class ModelRun:
    kind: ModelKind
    lp: LinearProgram
    status: Status
    solution: LpSolution | None = None
    milp: MilpSolution | None = None
    dispatch: DispatchResult | None = None
    lmps: LmpVector | None = None
    settlement: SettlementReport | None = None
    violations: ViolationReport | None = None
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL and self.violations is not None and self.violations.clean

    @property
    def objective(self) -> float:
        return self.solution.objective if self.solution is not None else np.nan


def run_model(
    case: PowerSystemCase,
    kind: ModelKind | str,
    build_opts: BuildOptions | None = None,
    solve_opts: SolveOptions | None = None,
    verify: bool = True,
) -> ModelRun:
    """Solve one model. Switching models are priced at the incumbent topology."""
    kind = ModelKind.parse(kind) if isinstance(kind, str) else kind
    build_opts = build_opts or BuildOptions()
    solve_opts = solve_opts or SolveOptions()
    t0 = time.perf_counter()
    lp = build_model(case, kind, build_opts)
    run = ModelRun(kind, lp, Status.NUMERICAL)
    if lp.integer.any():
        hint = {j: 1.0 for j in lp.binary_columns}
        milp = solve_milp(lp, solve_opts, incumbent_hint=hint)
        run.milp = milp
        run.status = milp.status
        if milp.incumbent is None:
            run.elapsed = time.perf_counter() - t0
            return run
        sol = fix_and_resolve(lp, milp.binaries, solve_opts)
        if milp.status in (Status.NODE_LIMIT, Status.TIME_LIMIT):
            log.warning("%s stopped at %s with gap %.3g", kind.label, milp.status.value, milp.gap)
    else:
        sol = solve_lp(lp, solve_opts)
        run.status = sol.status
    run.solution = sol
    if sol.status is Status.OPTIMAL:
        run.dispatch = decode_dispatch(case, sol)
        if run.milp is not None:
            run.dispatch.objective = run.milp.objective
        run.lmps = nodal_lmps(sol, kind, case)
        run.settlement = settlement(case, run.dispatch, run.lmps)
        if verify:
            run.violations = check_dispatch(case, run.dispatch, kind, build_opts)
    run.elapsed = time.perf_counter() - t0
    log.info("%s: %s, objective %.4f, %.2fs", kind.label, run.status.value, run.objective, run.elapsed)
    return run


def run_models(case, kinds=tuple(ModelKind), build_opts=None, solve_opts=None) -> dict[ModelKind, ModelRun]:
    return {k: run_model(case, k, build_opts, solve_opts) for k in kinds}


def relaxation_chain_ok(tc: dict[ModelKind, float], rel_tol: float = 1e-6) -> dict[str, bool]:
    """Pairwise checks of TC(R) <= TC(N) <= TC(E with NR) <= TC(E), each gap >= -rel_tol * TC(R)."""
    chain = [ModelKind.R_SOPF, ModelKind.N_SOPF, ModelKind.E_SOPF_NR, ModelKind.E_SOPF]
    present = [k for k in chain if k in tc]
    slack = rel_tol * abs(tc.get(ModelKind.R_SOPF, 1.0))
    out = {}
    for a, b in zip(present, present[1:]):
        out[f"{a.label} <= {b.label}"] = tc[b] - tc[a] >= -slack
    return out
