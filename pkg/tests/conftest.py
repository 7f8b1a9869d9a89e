import numpy as np
import pytest
import scipy.sparse as sp

from sopf import cases
from sopf.formulation import LinearProgram, RowTag, VariableRef

try:
    import highspy  # noqa: F401
    HAVE_HIGHSPY = True
except ImportError:
    HAVE_HIGHSPY = False


def generic_lp(c, A, sense, rhs, lb, ub, integer=None):
    """Wrap plain arrays as a LinearProgram with synthetic names."""
    n = len(c)
    A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float))) if len(rhs) else sp.csr_matrix((0, n))
    cols = [VariableRef("z", 0, 0, f"x{j}") for j in range(n)]
    rows = [RowTag(3, 0, None, f"r{i}") for i in range(len(rhs))]
    return LinearProgram(
        None, cols, lb, ub, c,
        np.zeros(n, bool) if integer is None else integer,
        [None] * n, A, sense, rhs, rows,
    )


@pytest.fixture
def two_bus():
    return cases.two_bus()


@pytest.fixture
def triangle():
    return cases.triangle()


@pytest.fixture
def four_bus():
    return cases.four_bus_switching()


@pytest.fixture(scope="session")
def rts():
    return cases.rts96()


def solve_externally(mps_text: str) -> tuple[float, str]:
    """Solve an MPS document with HiGHS (highspy); return objective and a 'name value' solution."""
    import os
    import tempfile

    import highspy

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.mps")
        with open(path, "w") as fh:
            fh.write(mps_text)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("mip_rel_gap", 1e-9)
        assert h.readModel(path) == highspy.HighsStatus.kOk
        h.run()
        assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
        names = h.getLp().col_names_
        values = h.getSolution().col_value
        obj = h.getInfo().objective_function_value
    text = "# external solve\n" + "\n".join(f"{n} {v!r}" for n, v in zip(names, values)) + "\n"
    return obj, text
