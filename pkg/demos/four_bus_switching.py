"""Corrective switching on a four-bus loop.

Compares the four models, lists the post-contingency line openings chosen
by the switching model and shows the wind curtailment they avoid.
"""
from sopf import cases
from sopf.economics import congestion_costs, curtailment_report, emit_reports
from sopf.engine import run_models
from sopf.formulation import ModelKind

case = cases.four_bus_switching()
runs = run_models(case)
costs = congestion_costs({k: r.objective for k, r in runs.items()})
markets = {k: (r.lmps, r.settlement) for k, r in runs.items()}
tables = emit_reports(costs, markets, "text")
print(tables["costs"])
print(tables["market"])

enr = runs[ModelKind.E_SOPF_NR].dispatch
for s, c, branch in enr.openings():
    outage = case.contingency_set.outages[c]
    if branch != outage:
        print(f"scenario {case.scenario_set.scenarios[s].name}: outage of {outage} -> open branch {branch}")
for kind in (ModelKind.E_SOPF, ModelKind.E_SOPF_NR):
    print(f"{kind.label:10s} curtailment {curtailment_report(runs[kind].dispatch).total:6.2f} MW")
