import numpy as np
import pytest

from sopf import cases
from sopf.dispatch import DispatchResult
from sopf.economics import (
    CostSummary,
    LmpVector,
    SettlementReport,
    congestion_costs,
    curtailment_report,
    emit_reports,
    nodal_lmps,
    parse_csv,
    settlement,
)
from sopf.engine import run_model, run_models
from sopf.formulation import ModelKind
from sopf.network import BusRecord, Scenario, ThermalUnit, make_case

M = ModelKind
TABLE_TC = {M.R_SOPF: 36_346, M.N_SOPF: 39_536, M.E_SOPF: 44_965, M.E_SOPF_NR: 43_075}


def test_published_congestion_costs():
    cs = congestion_costs(TABLE_TC)
    expected_tcc = {M.R_SOPF: 0, M.N_SOPF: 3_190, M.E_SOPF: 8_620, M.E_SOPF_NR: 6_729}
    expected_tccc = {M.N_SOPF: 0, M.E_SOPF: 5_430, M.E_SOPF_NR: 3_540}
    for k, v in expected_tcc.items():
        assert abs(cs.tcc[k] - v) <= 1
    for k, v in expected_tccc.items():
        assert abs(cs.tccc[k] - v) <= 1
    assert M.R_SOPF not in cs.tccc
    red = cs.nr_reduction()
    assert red["tcc"] == pytest.approx(1_890)
    assert red["tcc_pct"] == pytest.approx(21.9, abs=0.1)
    assert red["tccc_pct"] == pytest.approx(34.8, abs=0.1)


def test_congestion_costs_string_keys_and_zero():
    cs = congestion_costs({"r": 5.0, "n": 5.0, "e": 5.0, "enr": 5.0})
    assert all(v == 0 for v in cs.tcc.values())
    assert all(v == 0 for v in cs.tccc.values())
    with pytest.raises(KeyError):
        congestion_costs({M.N_SOPF: 1.0})


@pytest.mark.parametrize(
    "model, ld, gen, res, cong",
    [("R", 113_715, 87_748, 25_967, 0.0), ("N", 112_854, 62_989, 18_426, 31_439),
     ("E", 137_385, 72_706, 13_209, 51_471), ("ENR", 101_299, 61_884, 11_446, 27_969)],
)
def test_published_settlement_identity(model, ld, gen, res, cong):
    rep = SettlementReport(ld, gen, res, 0.0)
    assert abs(rep.congestion_revenue - cong) <= 1


def test_lmp_vector_averages():
    v = LmpVector([1, 2, 3], np.full(3, 12.5), np.array([1.0, 0.0, 3.0]))
    assert v.avg == 12.5 and v.avg_weighted == 12.5
    v = LmpVector([1, 2], np.array([10.0, 50.0]), np.array([0.0, 100.0]))
    assert v.avg == 30.0
    assert v.avg_weighted == 50.0
    assert v[2] == 50.0


def test_two_bus_lmps(two_bus):
    run = run_model(two_bus, M.N_SOPF)
    assert run.lmps[1] == pytest.approx(10.0, abs=1e-9)
    assert run.lmps[2] == pytest.approx(50.0, abs=1e-9)
    s = run.settlement
    assert s.load_payment == pytest.approx(5000.0)
    assert s.gen_revenue == pytest.approx(600.0 + 2000.0)
    assert s.congestion_revenue == pytest.approx(40.0 * 60.0)
    assert s.gen_cost == pytest.approx(2600.0)
    assert s.gen_profit == pytest.approx(0.0, abs=1e-9)


def test_nodal_lmps_needs_duals(two_bus):
    run = run_model(two_bus, M.N_SOPF)
    sol = run.solution
    sol.row_duals = np.full_like(sol.row_duals, np.nan)
    with pytest.raises(ValueError):
        nodal_lmps(sol)


@pytest.mark.parametrize("case_fn", [cases.two_bus, cases.triangle, cases.four_bus_switching, lambda: cases.random_instance(31)])
def test_settlement_identity_engine(case_fn):
    case = case_fn()
    kinds = list(M) if len(case.contingency_set) else [M.R_SOPF, M.N_SOPF]
    for kind, run in run_models(case, kinds).items():
        s = run.settlement
        assert s.congestion_revenue == pytest.approx(s.load_payment - s.gen_revenue - s.renewable_revenue, abs=1e-6)
        assert s.gen_profit == pytest.approx(s.gen_revenue - s.gen_cost, abs=1e-6)
        assert s.gen_cost == pytest.approx(run.objective, rel=1e-9)


def test_zero_load_settlement():
    case = make_case([BusRecord(1, 0.0)], [], [ThermalUnit("G", 1, 0, 10, 0, 10, 10, 5.0)], [], [Scenario(1.0, {})], [])
    run = run_model(case, M.R_SOPF)
    s = run.settlement
    assert (s.load_payment, s.gen_revenue, s.renewable_revenue, s.gen_cost, s.congestion_revenue) == (0, 0, 0, 0, 0)


def test_uncongested_collapse():
    case = cases.triangle(limit=1000.0, n_scenarios=2)
    for kind, run in run_models(case).items():
        assert np.ptp(run.lmps.per_bus) <= 1e-6
        assert abs(run.settlement.congestion_revenue) <= 1e-6


def test_curtailment_consistency(four_bus):
    for kind in M:
        d = run_model(four_bus, kind).dispatch
        fmax = np.array([[s.forecast_max[w] for w in d.renewable_ids] for s in four_bus.scenario_set])
        assert np.abs(d.pir + d.cir - fmax).max() <= 1e-7


def _fake_dispatch(pir, cir):
    S, I = np.shape(pir)
    z = np.zeros((S, 0))
    return DispatchResult(M.R_SOPF, 0.0, np.full(S, 1 / S), [], [f"W{i}" for i in range(I)], [], [], [],
                          z, z, np.asarray(pir, float), np.asarray(cir, float), z, z)


def test_curtailment_report_arithmetic():
    rep = curtailment_report(_fake_dispatch([[85.8]], [[100 - 85.8]]))
    assert rep.by_unit[(0, "W0")] == pytest.approx(14.2)
    assert rep.total == pytest.approx(14.2)
    rep = curtailment_report(_fake_dispatch([[10.0, 5.0]], [[0.0, 1e-9]]))
    assert rep.total == 0.0


def test_switching_removes_curtailment(four_bus):
    e = curtailment_report(run_model(four_bus, M.E_SOPF).dispatch)
    enr = curtailment_report(run_model(four_bus, M.E_SOPF_NR).dispatch)
    assert e.total > 1.0
    assert enr.total == 0.0


def test_reports_single_and_four(four_bus):
    runs = run_models(four_bus)
    costs = congestion_costs({k: r.objective for k, r in runs.items()})
    markets = {k: (r.lmps, r.settlement) for k, r in runs.items()}
    out = emit_reports(costs, markets, "csv")
    table = parse_csv(out["costs"])
    assert list(table["TC"]) == ["R-SOPF", "N-SOPF", "E-SOPF", "E-SOPFwNR"]
    assert table["TCC"]["R-SOPF"] == 0.0
    assert table["TCCC"]["N-SOPF"] == 0.0
    assert table["TCCC"]["R-SOPF"] is None
    market = parse_csv(out["market"])
    for row in ("AvgLMP", "AvgLMP_w", "LdPaymt", "ResGenRvn", "GenRvn", "GenProfit", "CongRvn"):
        assert set(market[row]) == {"R-SOPF", "N-SOPF", "E-SOPF", "E-SOPFwNR"}
    # bit-exact re-parse of the emitted (rounded) values
    for k, r in runs.items():
        assert market["LdPaymt"][k.label] == round(r.settlement.load_payment, 2)
        assert table["TC"][k.label] == round(r.objective, 2)
    assert out["lmp"].splitlines()[0] == "bus_id,model,lmp"
    assert len(out["lmp"].splitlines()) == 1 + 4 * len(four_bus.buses)

    single = emit_reports(None, {M.N_SOPF: markets[M.N_SOPF]}, "text")
    header = single["market"].splitlines()[0].split()
    assert header == ["metric", "N-SOPF"]
    with pytest.raises(ValueError):
        emit_reports(costs, markets, "xml")


def test_text_table_shape(four_bus):
    runs = run_models(four_bus)
    costs = congestion_costs({k: r.objective for k, r in runs.items()})
    text = emit_reports(costs, None, "text")["costs"]
    lines = text.splitlines()
    assert lines[0].split() == ["metric", "R-SOPF", "N-SOPF", "E-SOPF", "E-SOPFwNR"]
    assert "N/A" in lines[3]  # TCCC for R-SOPF
    assert CostSummary(costs.tc, costs.tcc, costs.tccc).nr_reduction()["tcc"] > 0


@pytest.mark.parametrize("seed", range(10))
def test_r_sopf_uniform_prices(seed):
    run = run_model(cases.random_instance(seed), M.R_SOPF)
    assert np.ptp(run.lmps.per_bus) <= 1e-6
