"""Export a model to MPS, solve it with HiGHS (highspy) and verify the result.

Requires the optional ``external`` extra: ``pip install artifact[external]``.
"""
import os
import tempfile

import highspy

from sopf import cases
from sopf.dispatch import decode_dispatch
from sopf.formulation import ModelKind, build_model
from sopf.solver import export_mps, import_solution
from sopf.verifier import check_dispatch

case = cases.four_bus_switching()
kind = ModelKind.E_SOPF_NR
lp = build_model(case, kind)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "model.mps")
    with open(path, "w") as fh:
        fh.write(export_mps(lp, kind.label))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(path)
    h.run()
    names = h.getLp().col_names_
    values = h.getSolution().col_value

solution = import_solution("\n".join(f"{n} {v!r}" for n, v in zip(names, values)), lp)
report = check_dispatch(case, decode_dispatch(case, solution), kind)
print(f"external objective {solution.objective:.4f}; violations: {len(report)}")
