import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import HAVE_HIGHSPY, generic_lp, solve_externally
from sopf import cases
from sopf.formulation import ModelKind, VariableRef, build_model
from sopf.solver import (
    SolveOptions,
    SolverError,
    Status,
    export_mps,
    export_solution,
    fix_and_resolve,
    import_solution,
    read_mps,
    simplex,
    solve_lp,
    solve_milp,
)

SIMPLEX = SolveOptions(method="simplex")
HIGHS = SolveOptions(method="highs")


# ---------------------------------------------------------------- LP


def test_bound_optimum_no_rows():
    c = np.array([3.0, 1.0, 2.0])
    lp = generic_lp(c, np.zeros((0, 3)), [], [], np.zeros(3), np.full(3, 5.0))
    sol = solve_lp(lp, SIMPLEX)
    assert sol.optimal
    assert np.all(sol.x == 0) and sol.objective == 0
    assert sol.reduced_costs == pytest.approx(c)


@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_two_bus_congested(opts):
    lp = build_model(cases.two_bus(limit=60.0), ModelKind.N_SOPF)
    sol = solve_lp(lp, opts)
    assert sol.objective == pytest.approx(2600.0, abs=1e-6)
    assert sol.value(VariableRef("p", 0, None, "G1")) == pytest.approx(60.0, abs=1e-7)
    assert sol.value(VariableRef("p", 0, None, "G2")) == pytest.approx(40.0, abs=1e-7)
    assert sol.dual("eq03_s0_c-_b2") == pytest.approx(50.0, abs=1e-7)
    assert sol.dual("eq03_s0_c-_b1") == pytest.approx(10.0, abs=1e-7)


@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_two_bus_uncongested(opts):
    lp = build_model(cases.two_bus(limit=150.0), ModelKind.N_SOPF)
    sol = solve_lp(lp, opts)
    assert sol.objective == pytest.approx(1000.0, abs=1e-6)
    assert sol.dual("eq03_s0_c-_b1") == pytest.approx(10.0, abs=1e-7)
    assert sol.dual("eq03_s0_c-_b2") == pytest.approx(10.0, abs=1e-7)


def test_infeasible_and_unbounded():
    # x0 + x1 >= 5 with x in [0, 1]
    lp = generic_lp([1.0, 1.0], [[1.0, 1.0]], [">="], [5.0], [0, 0], [1, 1])
    assert solve_lp(lp, SIMPLEX).status is Status.INFEASIBLE
    assert solve_lp(lp, HIGHS).status is Status.INFEASIBLE
    lp = generic_lp([-1.0, 0.0], [[1.0, -1.0]], ["<="], [1.0], [0, 0], [np.inf, np.inf])
    assert solve_lp(lp, SIMPLEX).status is Status.UNBOUNDED


def test_iteration_limit():
    lp = build_model(cases.rts96(n_scenarios=1), ModelKind.N_SOPF)
    sol = solve_lp(lp, SolveOptions(method="simplex", iteration_limit=3))
    assert sol.status is Status.ITERATION_LIMIT


@st.composite
def random_lps(draw):
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 8)), int(rng.integers(1, 9))
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7)
    x0 = rng.uniform(-1, 1, n)  # feasible by construction
    lb = x0 - rng.uniform(0, 2, n)
    ub = x0 + rng.uniform(0, 2, n)
    act = A @ x0
    sense = rng.choice(["<=", ">=", "="], m, p=[0.4, 0.4, 0.2])
    rhs = np.where(sense == "<=", act + rng.uniform(0, 1, m), np.where(sense == ">=", act - rng.uniform(0, 1, m), act))
    c = rng.normal(size=n)
    return c, A, list(sense), rhs, lb, ub


@given(random_lps())
@settings(max_examples=150, deadline=None)
def test_simplex_matches_reference(data):
    c, A, sense, rhs, lb, ub = data
    lp = generic_lp(c, A, sense, rhs, lb, ub)
    sol = solve_lp(lp, SIMPLEX)
    A_ub = np.array([A[i] * (1 if s == "<=" else -1) for i, s in enumerate(sense) if s != "="]).reshape(-1, len(c))
    b_ub = np.array([rhs[i] * (1 if s == "<=" else -1) for i, s in enumerate(sense) if s != "="])
    A_eq = np.array([A[i] for i, s in enumerate(sense) if s == "="]).reshape(-1, len(c))
    b_eq = np.array([rhs[i] for i, s in enumerate(sense) if s == "="])
    ref = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=list(zip(lb, ub)), method="highs")
    assert ref.status == 0
    assert sol.optimal
    assert sol.objective == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
    assert sol.primal_residual() <= 1e-7
    assert sol.complementarity_residual() <= 1e-7
    assert sol.duality_gap() <= 1e-6 * (1 + abs(sol.objective))


@pytest.mark.parametrize("kind", list(ModelKind)[:3])
@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_certificates_on_models(kind, opts):
    lp = build_model(cases.four_bus_switching(), kind)
    sol = solve_lp(lp, opts)
    assert sol.optimal
    assert sol.primal_residual() <= 1e-7 * 100  # MW rows: 1e-7 pu on a 100 MVA base
    assert sol.duality_gap() <= 1e-6 * (1 + abs(sol.objective))


def test_simplex_and_highs_agree_on_rts(rts):
    lp = build_model(cases.rts96(n_scenarios=2), ModelKind.N_SOPF)
    a, b = solve_lp(lp, SIMPLEX), solve_lp(lp, HIGHS)
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_determinism():
    lp = build_model(cases.four_bus_switching(), ModelKind.E_SOPF)
    a, b = solve_lp(lp, SIMPLEX), solve_lp(lp, SIMPLEX)
    assert a.objective == b.objective and a.iterations == b.iterations
    assert np.array_equal(a.x, b.x)
    enr = build_model(cases.four_bus_switching(), ModelKind.E_SOPF_NR)
    m1, m2 = solve_milp(enr), solve_milp(enr)
    assert (m1.objective, m1.node_count) == (m2.objective, m2.node_count)
    assert m1.binaries == m2.binaries


def test_raw_simplex_interface():
    import scipy.sparse as sp
    res = simplex(np.array([-1.0, -1.0]), sp.csr_matrix([[1.0, 2.0]]), np.array([-np.inf]), np.array([4.0]),
                  np.zeros(2), np.array([3.0, 3.0]))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-3.5)


# ---------------------------------------------------------------- MILP


def _knapsack():
    values = np.array([10.0, 13.0, 7.0])
    weights = np.array([[4.0, 6.0, 3.0]])
    lp = generic_lp(-values, weights, ["<="], [9.0], np.zeros(3), np.ones(3), integer=np.ones(3, bool))
    best = min(-values @ np.array(a) for a in itertools.product([0, 1], repeat=3) if weights @ np.array(a) <= 9)
    return lp, best


@pytest.mark.parametrize("method", ["bnb", "highs"])
def test_knapsack(method):
    lp, best = _knapsack()
    sol = solve_milp(lp, SolveOptions(milp_method=method))
    assert sol.optimal
    assert sol.objective == pytest.approx(best)
    assert sol.objective == pytest.approx(-20.0)
    if method == "bnb":
        assert sol.node_count <= 2 ** 3 * 4


def test_fixed_binaries_equal_lp():
    lp, _ = _knapsack()
    fixed = lp.fix({0: 1.0, 1: 0.0, 2: 1.0})
    a = solve_milp(fixed)
    b = solve_lp(fixed.relaxed())
    assert a.objective == pytest.approx(b.objective)
    assert a.node_count <= 1


def test_milp_not_below_relaxation(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF_NR)
    milp = solve_milp(lp)
    relax = solve_lp(lp.relaxed())
    assert milp.objective >= relax.objective - 1e-9
    assert milp.gap <= SolveOptions().mip_gap
    assert all(v in (0, 1) for v in milp.binaries.values())


def test_fix_at_incumbent_consistent(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF_NR)
    milp = solve_milp(lp)
    fixed = fix_and_resolve(lp, milp.binaries)
    assert fixed.objective == pytest.approx(milp.objective, rel=1e-6)


def test_fix_and_resolve_errors(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF_NR)
    with pytest.raises(SolverError):
        fix_and_resolve(lp, {lp.columns[lp.binary_columns[0]]: 1})


def test_node_limit_reports_gap(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF_NR)
    sol = solve_milp(lp, SolveOptions(node_limit=1), incumbent_hint={j: 1.0 for j in lp.binary_columns})
    assert sol.status in (Status.NODE_LIMIT, Status.OPTIMAL)
    if sol.status is Status.NODE_LIMIT:
        assert sol.incumbent is not None and sol.gap > 0


@pytest.mark.parametrize("seed", range(8))
def test_milp_matches_enumeration_small(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    m = int(rng.integers(1, 4))
    c = rng.normal(size=n)
    A = rng.uniform(0, 1, (m, n))
    rhs = A.sum(axis=1) * rng.uniform(0.3, 0.7, m)
    lp = generic_lp(c, A, ["<="] * m, rhs, np.zeros(n), np.ones(n), integer=np.ones(n, bool))
    best = min(c @ np.array(a) for a in itertools.product([0, 1], repeat=n) if np.all(A @ np.array(a) <= rhs + 1e-12))
    assert solve_milp(lp).objective == pytest.approx(best, abs=1e-6)


def test_enr_small_enumeration(four_bus):
    # <= 12 binaries: one scenario, one outage
    case = four_bus.with_updates(
        scenario_set=type(four_bus.scenario_set)((type(four_bus.scenario_set[0])(1.0, {"W1": 64.0}),)),
        contingency_set=type(four_bus.contingency_set)((1,)),
    )
    lp = build_model(case, ModelKind.E_SOPF_NR)
    bins = lp.binary_columns
    assert len(bins) <= 12
    best = math.inf
    for a in itertools.product([0.0, 1.0], repeat=len(bins)):
        if sum(1 - v for v in a) > case.z_max:
            continue
        sol = solve_lp(lp.fix(dict(zip(bins.tolist(), a))).relaxed())
        if sol.optimal:
            best = min(best, sol.objective)
    assert solve_milp(lp).objective == pytest.approx(best, rel=1e-9)


# ---------------------------------------------------------------- MPS


def test_mps_objective_only():
    lp = generic_lp([1.0, 2.0], np.zeros((0, 2)), [], [], [0, 0], [1, 1])
    text = export_mps(lp, "empty")
    for section in ("NAME", "ROWS", " N  COST", "COLUMNS", "ENDATA"):
        assert section in text


def test_mps_round_trip_structure(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF_NR)
    text = export_mps(lp, "toy")
    data = read_mps(text)
    assert data.row_names == lp.row_names
    assert data.col_names == lp.col_names
    assert np.array_equal(data.obj, lp.obj)
    assert (data.A != lp.A).nnz == 0
    assert np.array_equal(data.rhs, lp.rhs)
    assert np.array_equal(data.lb, lp.lb) and np.array_equal(data.ub, lp.ub)
    assert text.count(" BV ") == len(lp.binary_columns)
    assert data.integer.sum() == len(lp.binary_columns)


def test_mps_duplicate_names_suffixed():
    lp = generic_lp([1.0, 1.0], [[1.0, 1.0]], ["<="], [1.0], [0, 0], [1, 1])
    data = read_mps(export_mps(lp))
    assert data.col_names == ["z_s0_c0_x0", "z_s0_c0_x1"]
    from sopf.solver.mps import unique_names
    assert unique_names(["a", "a", "b", "a"]) == ["a", "a__2", "b", "a__3"]


def test_solution_round_trip(four_bus):
    lp = build_model(four_bus, ModelKind.E_SOPF)
    sol = solve_lp(lp)
    back = import_solution(export_solution(sol), lp)
    assert back.status is Status.IMPORTED
    assert np.array_equal(back.x, sol.x)
    assert back.objective == pytest.approx(sol.objective)


def test_import_errors(two_bus):
    lp = build_model(two_bus, ModelKind.N_SOPF)
    text = export_solution(solve_lp(lp)).replace("p_s0_G1", "p_s0_G9")
    with pytest.raises(SolverError, match="p_s0_G9"):
        import_solution(text, lp)
    enr = build_model(cases.four_bus_switching(), ModelKind.E_SOPF_NR)
    with pytest.raises(SolverError, match="binar"):
        import_solution("p_s0_G1 1.0\n", enr)


@pytest.mark.skipif(not HAVE_HIGHSPY, reason="highspy not installed")
def test_external_two_bus():
    lp = build_model(cases.two_bus(), ModelKind.N_SOPF)
    obj, text = solve_externally(export_mps(lp, "two_bus"))
    assert obj == pytest.approx(2600.0)
    back = import_solution(text, lp)
    assert back.objective == pytest.approx(2600.0)
