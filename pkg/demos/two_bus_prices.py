"""Congested two-bus system: nodal prices and settlement.

A cheap unit at bus 1 serves a load at bus 2 across a 60 MW line; the
expensive local unit covers the rest and sets the bus-2 price.
"""
from sopf import cases
from sopf.engine import run_model

case = cases.two_bus()
run = run_model(case, "n")
print(f"operating cost   {run.objective:10.2f} $/h")
for bus in case.buses:
    print(f"LMP bus {bus.id}        {run.lmps[bus.id]:10.2f} $/MWh")
s = run.settlement
print(f"load payment     {s.load_payment:10.2f}")
print(f"generator rev.   {s.gen_revenue:10.2f}")
print(f"congestion rent  {s.congestion_revenue:10.2f}  (= 40 $/MWh x 60 MW)")
