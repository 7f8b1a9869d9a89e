import numpy as np
import pytest

from sopf import cases
from sopf.engine import run_model
from sopf.formulation import BuildOptions, ModelKind, VariableRef, build_model
from sopf.network import Scenario
from sopf.solver import SolveOptions, solve_milp
from sopf.verifier import (
    IslandingError,
    check_dispatch,
    enumerate_switching_oracle,
    recompute_contingency_flows,
)

M = ModelKind
TOL = 1e-6


def test_two_bus_overload_single_entry(two_bus):
    d = run_model(two_bus, M.N_SOPF).dispatch.copy()
    # shift 5 MW to the cheap unit and push it over the 60 MW line, keeping balance and flow physics
    d.p[0] = [65.0, 35.0]
    d.flow[0] = [65.0]
    d.theta[0] = [0.0, -65.0 * 0.1 / 100.0]
    d.r[0] = [35.0, 65.0]  # each unit's output covered by the other's reserve
    rep = check_dispatch(two_bus, d, M.N_SOPF)
    assert len(rep) == 1
    v = rep.entries[0]
    assert v.tag == "eq08" and v.element == "1"
    assert v.magnitude == pytest.approx(5.0)
    assert rep.exit_status == 1
    assert rep.to_csv().splitlines()[0] == "tag,scenario,contingency,element,residual,tolerance"


@pytest.mark.parametrize("kind", list(M))
def test_optimal_outputs_clean(four_bus, kind):
    run = run_model(four_bus, kind)
    assert run.violations.clean and run.violations.exit_status == 0


def test_coverage_gap(four_bus):
    d = run_model(four_bus, M.N_SOPF).dispatch
    with pytest.raises(ValueError, match="theta_c"):
        check_dispatch(four_bus, d, M.E_SOPF)


# ---------------------------------------------------------------- perturbations

_FIELDS = {"p": "p", "r": "r", "pir": "pIR", "cir": "cIR", "theta": "theta", "flow": "flow",
           "theta_c": "theta_c", "flow_c": "flow_c", "z": "z"}


def _to_vector(lp, case, d):
    """Place dispatch arrays into the program's column order."""
    x = np.zeros(lp.n_cols)
    ids = {"p": d.unit_ids, "r": d.unit_ids, "pir": d.renewable_ids, "cir": d.renewable_ids,
           "theta": d.bus_ids, "flow": d.branch_ids, "theta_c": d.bus_ids, "flow_c": d.branch_ids, "z": d.branch_ids}
    for j, ref in enumerate(lp.columns):
        field = {v: k for k, v in _FIELDS.items()}[ref.kind]
        arr = getattr(d, field)
        e = ids[field].index(ref.element)
        x[j] = arr[ref.scenario, ref.contingency, e] if ref.contingency is not None else arr[ref.scenario, e]
    return x


def _lp_violated(lp, x, base):
    """Independent feasibility judgement from the assembled rows and bounds."""
    lo, hi = lp.row_bounds()
    act = lp.A @ x
    tol = TOL * base
    rows = np.any(act < lo - tol) or np.any(act > hi + tol)
    cols = np.any(x < lp.lb - tol) or np.any(x > lp.ub + tol)
    bins = lp.binary_columns
    frac = np.any(np.minimum(np.abs(x[bins]), np.abs(x[bins] - 1)) > TOL) if bins.size else False
    return rows or cols or frac


def _perturbations(d, lp):
    switchable = {(c.scenario, c.contingency, c.element) for c in lp.columns if c.kind == "z"}
    for name in _FIELDS:
        arr = getattr(d, name)
        if arr is None:
            continue
        for idx in np.ndindex(arr.shape):
            # z slots of outaged or fixed lines are constants, not variables
            if name == "z" and (idx[0], idx[1], d.branch_ids[idx[2]]) not in switchable:
                continue
            yield name, idx


@pytest.mark.parametrize("kind", list(M))
def test_single_variable_perturbations(four_bus, kind):
    case = four_bus
    run = run_model(case, kind)
    lp = build_model(case, kind)
    base = case.base_mva
    missed, feasible = [], []
    for name, idx in _perturbations(run.dispatch, lp):
        # MW quantities move 10 tol in per unit, angles and statuses 10 tol
        step = 10 * TOL * (1.0 if name in ("theta", "theta_c", "z") else base)
        for sign in (1.0, -1.0):
            d = run.dispatch.copy()
            getattr(d, name)[idx] += sign * step
            caught = not check_dispatch(case, d, kind).clean
            truly_bad = _lp_violated(lp, _to_vector(lp, case, d), base)
            if truly_bad and not caught:
                missed.append((name, idx, sign))
            if not truly_bad:
                feasible.append((name, idx, sign))
    assert missed == []
    # only reserves appear in inequalities alone, so only they may move without breaking a row
    assert {f[0] for f in feasible} <= {"r"}


def test_reserve_perturbation_caught_at_bound(two_bus):
    run = run_model(two_bus, M.N_SOPF)
    d = run.dispatch.copy()
    # push every reserve above its capacity headroom
    units = two_bus.online_units
    for g, u in enumerate(units):
        d.r[0, g] = u.p_max - d.p[0, g] + 10 * TOL * two_bus.base_mva
    rep = check_dispatch(two_bus, d, M.N_SOPF)
    assert "eq11" in rep.tags()


# ---------------------------------------------------------------- flows


def test_recompute_without_outage_equals_base(four_bus):
    d = run_model(four_bus, M.N_SOPF).dispatch
    for s in range(2):
        assert recompute_contingency_flows(four_bus, d, None, (), s) == pytest.approx(d.flow[s], abs=1e-9)


def test_recompute_triangle_hand_solve():
    case = cases.triangle(limit=200.0, load=90.0)
    case = case.with_updates(scenario_set=type(case.scenario_set)((Scenario(1.0, {"W1": 0.0}),)))
    d = run_model(case, M.E_SOPF).dispatch
    # 90 MW injected at bus 1, withdrawn at 3; with branch 1 (1-2) out everything uses 1-3
    flows = recompute_contingency_flows(case, d, 1)
    assert flows == pytest.approx([0.0, 0.0, 90.0], abs=1e-9)
    flows = recompute_contingency_flows(case, d, 3)
    assert flows == pytest.approx([90.0, 90.0, 0.0], abs=1e-9)


def test_recompute_radial_unique(four_bus):
    d = run_model(four_bus, M.N_SOPF).dispatch
    # leave the spanning tree 1-2, 2-3, 3-4 after removing branches 4, 5 and 6
    flows = recompute_contingency_flows(four_bus, d, 4, (5, 6))
    inj = {1: d.p[0, 0] + d.pir[0, 0], 2: -16.0, 3: 0.0, 4: d.p[0, 1] - 114.0}
    assert flows[0] == pytest.approx(inj[1], abs=1e-9)
    assert flows[1] == pytest.approx(inj[1] + inj[2], abs=1e-9)
    assert flows[2] == pytest.approx(inj[1] + inj[2] + inj[3], abs=1e-9)


def test_recompute_islanding(four_bus):
    d = run_model(four_bus, M.N_SOPF).dispatch
    with pytest.raises(IslandingError):
        recompute_contingency_flows(four_bus, d, 1, (4, 6))


@pytest.mark.parametrize("kind", [M.E_SOPF, M.E_SOPF_NR])
@pytest.mark.parametrize("case_fn", [cases.four_bus_switching, lambda: cases.random_instance(13)])
def test_n1_security_independent(case_fn, kind):
    case = case_fn()
    d = run_model(case, kind).dispatch
    br = case.branches
    for s in range(len(case.scenario_set)):
        for c, outage in enumerate(case.contingency_set):
            opened = tuple(k for _, cc, k in [o for o in d.openings() if o[0] == s] if cc == c)
            flows = recompute_contingency_flows(case, d, outage, opened, s)
            assert flows == pytest.approx(d.flow_c[s, c], abs=TOL * case.base_mva)
            for k, b in enumerate(br):
                if b.id != outage and b.id not in opened:
                    assert abs(flows[k]) <= b.limit_emergency + 1e-6


# ---------------------------------------------------------------- oracle


def test_oracle_zero_budget_is_e_sopf(four_bus):
    case = four_bus.with_updates(z_max=0)
    o = enumerate_switching_oracle(case)
    assert o.objective == pytest.approx(run_model(case, M.E_SOPF).objective, rel=1e-9)
    assert all(k is None for k in o.openings.values())


def test_oracle_four_bus_single_pair(four_bus):
    case = four_bus.with_updates(
        scenario_set=type(four_bus.scenario_set)((Scenario(1.0, {"W1": 64.0}),)),
        contingency_set=type(four_bus.contingency_set)((1,)),
    )
    o = enumerate_switching_oracle(case)
    assert o.n_evaluated == 1 + (1 + 5) + 1 - 1  # per-scenario pass plus the final joint solve
    milp = solve_milp(build_model(case, M.E_SOPF_NR))
    assert o.objective == pytest.approx(milp.objective, rel=1e-6)


def test_oracle_triangle_no_gain():
    case = cases.triangle(limit=1000.0, n_scenarios=1)
    o = enumerate_switching_oracle(case)
    assert o.objective == pytest.approx(run_model(case, M.E_SOPF).objective, rel=1e-9)
    assert all(k is None for k in o.openings.values())


@pytest.mark.slow
def test_oracle_separable_equals_cross_product(four_bus):
    a = enumerate_switching_oracle(four_bus)
    b = enumerate_switching_oracle(four_bus, separable=False)
    assert a.objective == pytest.approx(b.objective, rel=1e-9)
    assert a.n_evaluated < b.n_evaluated


def test_oracle_limits(four_bus):
    with pytest.raises(ValueError, match="too large"):
        enumerate_switching_oracle(four_bus, max_combinations=5)
    with pytest.raises(ValueError):
        enumerate_switching_oracle(four_bus.with_updates(z_max=2))


@pytest.mark.slow
@pytest.mark.slow
@pytest.mark.parametrize("seed", [12, 13, 15, 22, 31, 39])
def test_oracle_matches_milp(seed):
    case = cases.random_instance(seed)
    o = enumerate_switching_oracle(case)
    milp = solve_milp(build_model(case, M.E_SOPF_NR))
    assert abs(milp.objective - o.objective) <= 1e-6 * max(1.0, abs(o.objective))
