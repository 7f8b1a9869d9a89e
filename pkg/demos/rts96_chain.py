"""Relaxation chain on the bundled one-area RTS-96 case.

R <= N <= E on the full case (10 scenarios, every non-bridge outage), then
the switching model on the reduced case (3 scenarios, 6 outages) with the
HiGHS MILP backend.
"""
import time

from sopf import cases
from sopf.engine import relaxation_chain_ok, run_model
from sopf.formulation import ModelKind as M
from sopf.solver import SolveOptions


def solve(case, kind, opts=None):
    t = time.perf_counter()
    run = run_model(case, kind, solve_opts=opts)
    print(f"  {kind.label:10s} {run.objective:11.2f} $/h  {time.perf_counter() - t:6.1f} s  "
          f"violations {len(run.violations)}")
    return run.objective


for title, case, kinds in (("full case", cases.rts96(), (M.R_SOPF, M.N_SOPF, M.E_SOPF)),
                           ("reduced case", cases.rts96_reduced(), tuple(M))):
    print(f"{title}: {len(case.scenario_set)} scenarios, {len(case.contingency_set)} outages")
    tc = {k: solve(case, k, SolveOptions(milp_method="highs") if k is M.E_SOPF_NR else None) for k in kinds}
    for pair, ok in relaxation_chain_ok(tc).items():
        print(f"  {'PASS' if ok else 'FAIL'} {pair}")
