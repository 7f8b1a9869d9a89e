"""Congestion costs, nodal prices and market settlement.

Prices are taken from the duals of the nodal balance rows. A dual here is
the sensitivity of the optimal expected cost to the right-hand side, so the
scenario weights are already inside each dual; a bus price is the plain sum
over scenarios (and, for the contingency-constrained models, over every
post-contingency balance row as well).
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .dispatch import DispatchResult
from .formulation import ModelKind, RowTag
from .network import PowerSystemCase

__all__ = [
    "CostSummary",
    "CurtailmentReport",
    "LmpVector",
    "SettlementReport",
    "congestion_costs",
    "curtailment_report",
    "emit_reports",
    "nodal_lmps",
    "parse_csv",
    "settlement",
]

MODEL_ORDER = (ModelKind.R_SOPF, ModelKind.N_SOPF, ModelKind.E_SOPF, ModelKind.E_SOPF_NR)


@dataclass(frozen=True)
class CostSummary:
    tc: dict[ModelKind, float]
    tcc: dict[ModelKind, float]
    tccc: dict[ModelKind, float]

    def nr_reduction(self) -> dict[str, float] | None:
        """Savings from switching: absolute and as a share of the E-SOPF congestion costs."""
        e, enr = ModelKind.E_SOPF, ModelKind.E_SOPF_NR
        if e not in self.tc or enr not in self.tc:
            return None
        d_tcc = self.tcc[e] - self.tcc[enr]
        d_tccc = self.tccc[e] - self.tccc[enr]
        return {
            "tcc": d_tcc,
            "tcc_pct": 100.0 * d_tcc / self.tcc[e] if self.tcc[e] else math.nan,
            "tccc": d_tccc,
            "tccc_pct": 100.0 * d_tccc / self.tccc[e] if self.tccc[e] else math.nan,
        }


def congestion_costs(tc_by_model: Mapping) -> CostSummary:
    """Total and contingency-case congestion cost of each model.

    TCC is measured against R-SOPF and TCCC against N-SOPF. R-SOPF has no
    contingency-case cost entry: it enforces no network limits at all.
    """
    tc = {(ModelKind.parse(k) if isinstance(k, str) else k): float(v) for k, v in tc_by_model.items()}
    for bench in (ModelKind.R_SOPF, ModelKind.N_SOPF):
        if bench not in tc:
            raise KeyError(f"congestion costs need the {bench.label} benchmark")
    r, n = tc[ModelKind.R_SOPF], tc[ModelKind.N_SOPF]
    tcc = {k: v - r for k, v in tc.items()}
    tccc = {k: v - n for k, v in tc.items() if k is not ModelKind.R_SOPF}
    return CostSummary(tc, tcc, tccc)


@dataclass(frozen=True)
class LmpVector:
    bus_ids: list
    per_bus: np.ndarray
    loads: np.ndarray

    @property
    def avg(self) -> float:
        return float(self.per_bus.mean())

    @property
    def avg_weighted(self) -> float:
        total = self.loads.sum()
        if total == 0:
            return self.avg
        return float(self.per_bus @ self.loads / total)

    def __getitem__(self, bus_id) -> float:
        return float(self.per_bus[self.bus_ids.index(bus_id)])


def nodal_lmps(solution, kind: ModelKind | None = None, case: PowerSystemCase | None = None) -> LmpVector:
    """Bus prices from the balance-row duals of an optimal LP solution.

    For switching models pass the :func:`~sopf.solver.fix_and_resolve` result.
    """
    lp = solution.lp
    case = case or lp.case
    kind = kind or lp.kind
    y = solution.row_duals
    if y is None or np.isnan(y).any():
        raise ValueError("solution carries no duals")
    rows = lp.row_index
    S = len(case.scenario_set)
    C = len(case.contingency_set) if kind.has_contingencies else 0
    prices = np.zeros(len(case.buses))
    for n, bus in enumerate(case.buses):
        el = f"b{bus.id}"
        total = 0.0
        for s in range(S):
            total += y[rows[RowTag(3, s, None, el).name]]
            for c in range(C):
                total += y[rows[RowTag(14, s, c, el).name]]
        prices[n] = total
    return LmpVector([b.id for b in case.buses], prices, case.loads)


@dataclass(frozen=True)
class SettlementReport:
    load_payment: float
    gen_revenue: float
    renewable_revenue: float
    gen_cost: float
    curtailment: dict = field(default_factory=dict)

    @property
    def gen_profit(self) -> float:
        return self.gen_revenue - self.gen_cost

    @property
    def congestion_revenue(self) -> float:
        return self.load_payment - self.gen_revenue - self.renewable_revenue


def settlement(
    case: PowerSystemCase,
    dispatch: DispatchResult,
    lmps: LmpVector,
    gen_cost: float | None = None,
) -> SettlementReport:
    """Load payment, generator revenues and profit at the given prices.

    Quantities are expected values over scenarios; ``gen_cost`` defaults to
    the expected thermal cost of the dispatch.
    """
    w = dispatch.weights
    price = dict(zip(lmps.bus_ids, lmps.per_bus))
    load_payment = float(sum(price[b.id] * b.load for b in case.buses))
    exp_p = w @ dispatch.p
    exp_ir = w @ dispatch.pir
    units = {u.id: u for u in case.online_units}
    gen_rev = float(sum(price[units[g].bus] * v for g, v in zip(dispatch.unit_ids, exp_p)))
    ren_bus = {r.id: r.bus for r in case.renewable_units}
    ren_rev = float(sum(price[ren_bus[i]] * v for i, v in zip(dispatch.renewable_ids, exp_ir)))
    if gen_cost is None:
        gen_cost = dispatch.gen_cost(case)
    return SettlementReport(load_payment, gen_rev, ren_rev, float(gen_cost), curtailment_report(dispatch).by_unit)


@dataclass(frozen=True)
class CurtailmentReport:
    by_unit: dict
    per_scenario: np.ndarray

    @property
    def total(self) -> float:
        return float(self.per_scenario.sum())


def curtailment_report(dispatch: DispatchResult, tol: float = 1e-6) -> CurtailmentReport:
    """Curtailed renewable MW keyed by (scenario, unit); values below ``tol`` read as 0."""
    cir = np.where(np.abs(dispatch.cir) <= tol, 0.0, dispatch.cir)
    by_unit = {
        (s, uid): float(cir[s, i])
        for s in range(cir.shape[0])
        for i, uid in enumerate(dispatch.renewable_ids)
    }
    return CurtailmentReport(by_unit, cir.sum(axis=1))


# ---------------------------------------------------------------- tables


def _ordered(models) -> list[ModelKind]:
    return [m for m in MODEL_ORDER if m in models]


def _cost_rows(costs: CostSummary) -> tuple[list[str], list[list]]:
    models = _ordered(costs.tc)
    header = ["metric"] + [m.label for m in models]
    rows = [
        ["TC"] + [costs.tc[m] for m in models],
        ["TCC"] + [costs.tcc[m] for m in models],
        ["TCCC"] + [costs.tccc.get(m) for m in models],
    ]
    red = costs.nr_reduction()
    if red is not None:
        pad = [None] * (len(models) - 1)
        rows.append(["TCC reduction with NR"] + pad + [red["tcc"]])
        rows.append(["TCC reduction with NR (%)"] + pad + [red["tcc_pct"]])
        rows.append(["TCCC reduction with NR"] + pad + [red["tccc"]])
        rows.append(["TCCC reduction with NR (%)"] + pad + [red["tccc_pct"]])
    return header, rows


def _market_rows(markets: Mapping[ModelKind, tuple[LmpVector, SettlementReport]]) -> tuple[list[str], list[list]]:
    models = _ordered(markets)
    header = ["metric"] + [m.label for m in models]
    getters = [
        ("AvgLMP", lambda l, s: l.avg),
        ("AvgLMP_w", lambda l, s: l.avg_weighted),
        ("LdPaymt", lambda l, s: s.load_payment),
        ("ResGenRvn", lambda l, s: s.renewable_revenue),
        ("GenRvn", lambda l, s: s.gen_revenue),
        ("GenCost", lambda l, s: s.gen_cost),
        ("GenProfit", lambda l, s: s.gen_profit),
        ("CongRvn", lambda l, s: s.congestion_revenue),
    ]
    rows = [[name] + [f(*markets[m]) for m in models] for name, f in getters]
    return header, rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([row[0]] + ["" if v is None else repr(round(float(v), 2) + 0.0) for v in row[1:]])
    return buf.getvalue()


def _text(header, rows, decimals: dict[str, int]) -> str:
    cells = [header]
    for row in rows:
        d = decimals.get(row[0], 0)
        fmt = []
        for v in row[1:]:
            if v is None:
                fmt.append("N/A")
            elif isinstance(v, float) and math.isnan(v):
                fmt.append("nan")
            else:
                fmt.append(f"{round(v, d) + 0.0:,.{d}f}")
        cells.append([row[0]] + fmt)
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for r in cells:
        lines.append("  ".join([r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]))
    return "\n".join(lines) + "\n"


def lmp_csv(lmps_by_model: Mapping[ModelKind, LmpVector]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["bus_id", "model", "lmp"])
    for m in _ordered(lmps_by_model):
        v = lmps_by_model[m]
        for b, p in zip(v.bus_ids, v.per_bus):
            wr.writerow([b, m.label, repr(round(float(p), 2) + 0.0)])
    return buf.getvalue()


def emit_reports(
    costs: CostSummary | None = None,
    markets: Mapping[ModelKind, tuple[LmpVector, SettlementReport]] | None = None,
    fmt: str = "csv",
) -> dict[str, str]:
    """Cost table, market table and per-bus price CSV.

    ``fmt="csv"`` writes values rounded to cents; ``fmt="text"`` writes an
    aligned table with currency rounded to whole units. The price listing is
    always CSV.
    """
    if fmt not in ("csv", "text"):
        raise ValueError(f"unknown format {fmt!r}")
    out = {}
    pct = {"TCC reduction with NR (%)": 1, "TCCC reduction with NR (%)": 1}
    if costs is not None:
        header, rows = _cost_rows(costs)
        out["costs"] = _csv(header, rows) if fmt == "csv" else _text(header, rows, pct)
    if markets:
        header, rows = _market_rows(markets)
        out["market"] = _csv(header, rows) if fmt == "csv" else _text(header, rows, {"AvgLMP": 1, "AvgLMP_w": 1})
        out["lmp"] = lmp_csv({m: v[0] for m, v in markets.items()})
    return out


def parse_csv(text: str) -> dict[str, dict[str, float | None]]:
    """Read a cost or market CSV back into ``{metric: {model label: value}}``."""
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    return {
        row[0]: {h: (float(v) if v != "" else None) for h, v in zip(header[1:], row[1:])}
        for row in rows[1:]
    }
