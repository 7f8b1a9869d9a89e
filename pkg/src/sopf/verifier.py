"""Independent feasibility checks and brute-force oracles.

Checks read the case data and the decoded dispatch only; they never look at
the assembled program, so a wrong row in the formulation shows up here as a
violation instead of being reproduced.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .dispatch import DispatchResult
from .formulation import BuildOptions, ModelKind, VariableRef, big_m, build_model
from .network import PowerSystemCase, is_connected

__all__ = [
    "IslandingError",
    "OracleResult",
    "Violation",
    "ViolationReport",
    "check_dispatch",
    "enumerate_switching_oracle",
    "recompute_contingency_flows",
]


class IslandingError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    tag: str
    element: str
    scenario: int | None
    contingency: int | None
    magnitude: float
    tolerance: float


@dataclass
class ViolationReport:
    entries: list[Violation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.entries

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def tags(self) -> set[str]:
        return {v.tag for v in self.entries}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["tag", "scenario", "contingency", "element", "residual", "tolerance"])
        for v in self.entries:
            wr.writerow([
                v.tag,
                "" if v.scenario is None else v.scenario,
                "" if v.contingency is None else v.contingency,
                v.element, repr(v.magnitude), repr(v.tolerance),
            ])
        return buf.getvalue()

    @property
    def exit_status(self) -> int:
        return 0 if self.clean else 1


class _Checker:
    def __init__(self, tol_mw: float, tol_rel: float):
        self.entries: list[Violation] = []
        self.tol_mw = tol_mw
        self.tol_rel = tol_rel

    def over(self, tag, element, s, c, excess, tol=None):
        """Record ``excess`` if it is above tolerance (excess <= 0 means satisfied)."""
        tol = self.tol_mw if tol is None else tol
        if not np.isfinite(excess) or excess > tol:
            self.entries.append(Violation(tag, str(element), s, c, float(excess), tol))

    def equal(self, tag, element, s, c, residual, tol=None):
        self.over(tag, element, s, c, abs(residual), tol)


def check_dispatch(
    case: PowerSystemCase,
    dispatch: DispatchResult,
    kind: ModelKind | None = None,
    opts: BuildOptions | None = None,
    tol: float = 1e-6,
) -> ViolationReport:
    """Re-check every model constraint from scratch.

    ``tol`` is in per unit on the case base; power residuals are reported in
    MW against ``tol * base_mva``. Binary statuses must be within ``tol`` of
    0 or 1.
    """
    kind = kind or dispatch.kind
    opts = opts or BuildOptions()
    base = case.base_mva
    ck = _Checker(tol * base, tol)
    S = len(case.scenario_set)
    units = case.online_units
    ren = case.renewable_units
    _check_coverage(case, dispatch, kind)

    bus_pos = {b.id: i for i, b in enumerate(case.buses)}
    loads = case.loads
    ignore_ramp = opts.ignore_ramp or case.ignore_ramp

    gen_at_bus = np.zeros((S, len(case.buses)))
    for g, u in enumerate(units):
        gen_at_bus[:, bus_pos[u.bus]] += dispatch.p[:, g]
    for i, w in enumerate(ren):
        gen_at_bus[:, bus_pos[w.bus]] += dispatch.pir[:, i]

    def net_inflow(flows: np.ndarray) -> np.ndarray:
        inflow = np.zeros(len(case.buses))
        for k, br in enumerate(case.branches):
            inflow[bus_pos[br.to_bus]] += flows[k]
            inflow[bus_pos[br.from_bus]] -= flows[k]
        return inflow

    ref = bus_pos[case.reference_bus]
    for s, scen in enumerate(case.scenario_set):
        bal = gen_at_bus[s] + net_inflow(dispatch.flow[s]) - loads
        for n, b in enumerate(case.buses):
            ck.equal("eq03", b.id, s, None, bal[n])
        ck.equal("bound", f"theta_ref_{case.reference_bus}", s, None, dispatch.theta[s, ref], tol)
        for g, u in enumerate(units):
            p = dispatch.p[s, g]
            r = dispatch.r[s, g]
            if not ignore_ramp:
                ck.over("eq04", u.id, s, None, abs(p - u.p_initial) - u.ramp_interval)
            ck.over("eq05", u.id, s, None, max(u.p_min - p, p - u.p_max))
            r_hi = u.ramp_spin if opts.enable_reserve else 0.0
            ck.over("eq10", u.id, s, None, max(-r, r - r_hi))
            if opts.enable_reserve:
                ck.over("eq11", u.id, s, None, p + r - u.p_max)
        if opts.enable_reserve:
            r_total = dispatch.r[s].sum()
            for g, u in enumerate(units):
                ck.over("eq12", u.id, s, None, dispatch.p[s, g] + dispatch.r[s, g] - r_total)
            for i, w in enumerate(ren):
                ck.over("eq13", w.id, s, None, dispatch.pir[s, i] - r_total)
        for i, w in enumerate(ren):
            ck.equal("eq06", w.id, s, None, dispatch.pir[s, i] + dispatch.cir[s, i] - scen.forecast_max[w.id])
            ck.over("eq07", w.id, s, None, max(-dispatch.pir[s, i], -dispatch.cir[s, i]))
        for k, br in enumerate(case.branches):
            f = dispatch.flow[s, k]
            dtheta = dispatch.theta[s, bus_pos[br.from_bus]] - dispatch.theta[s, bus_pos[br.to_bus]]
            ck.equal("eq09", br.id, s, None, f - base * dtheta / br.reactance)
            if kind.has_base_limits:
                ck.over("eq08", br.id, s, None, abs(f) - br.limit_normal)

    if kind.has_contingencies:
        _check_contingencies(case, dispatch, kind, opts, ck, gen_at_bus, net_inflow, bus_pos, ref)
    return ViolationReport(ck.entries)


def _check_contingencies(case, dispatch, kind, opts, ck, gen_at_bus, net_inflow, bus_pos, ref):
    base = case.base_mva
    loads = case.loads
    switching = kind is ModelKind.E_SOPF_NR
    for s in range(len(case.scenario_set)):
        for c, outage in enumerate(case.contingency_set):
            flows = dispatch.flow_c[s, c]
            theta = dispatch.theta_c[s, c]
            z = dispatch.z[s, c] if dispatch.z is not None else np.ones(len(case.branches))
            bal = gen_at_bus[s] + net_inflow(flows) - loads
            for n, b in enumerate(case.buses):
                ck.equal("eq14", b.id, s, c, bal[n])
            ck.equal("bound", f"theta_ref_{case.reference_bus}", s, c, theta[ref], ck.tol_rel)
            opened = 0.0
            for k, br in enumerate(case.branches):
                f = flows[k]
                if br.id == outage:
                    ck.equal("eq17", br.id, s, c, f)
                    continue
                dtheta = theta[bus_pos[br.from_bus]] - theta[bus_pos[br.to_bus]]
                resid = f - base * dtheta / br.reactance
                if switching and br.switchable:
                    zk = z[k]
                    ck.equal("z", br.id, s, c, min(abs(zk), abs(zk - 1.0)), ck.tol_rel)
                    opened += 1.0 - zk
                    ck.over("eq18", br.id, s, c, abs(f) - zk * br.limit_emergency)
                    M = base * big_m(br, opts)
                    ck.over("eq19", br.id, s, c, -(resid + (1.0 - zk) * M))
                    ck.over("eq20", br.id, s, c, resid - (1.0 - zk) * M)
                else:
                    if switching:
                        ck.equal("z", br.id, s, c, z[k] - 1.0, ck.tol_rel)
                    ck.over("eq15", br.id, s, c, abs(f) - br.limit_emergency)
                    ck.equal("eq16", br.id, s, c, resid)
            if switching:
                ck.over("eq21", f"outage_{outage}", s, c, opened - case.z_max, ck.tol_rel)


def _check_coverage(case, dispatch, kind) -> None:
    S = len(case.scenario_set)
    shapes = {
        "p": (S, len(case.online_units)),
        "r": (S, len(case.online_units)),
        "pir": (S, len(case.renewable_units)),
        "cir": (S, len(case.renewable_units)),
        "theta": (S, len(case.buses)),
        "flow": (S, len(case.branches)),
    }
    if kind.has_contingencies:
        C = len(case.contingency_set)
        shapes["theta_c"] = (S, C, len(case.buses))
        shapes["flow_c"] = (S, C, len(case.branches))
        if kind is ModelKind.E_SOPF_NR:
            shapes["z"] = (S, C, len(case.branches))
    for name, shape in shapes.items():
        v = getattr(dispatch, name)
        if v is None or v.shape != shape:
            got = None if v is None else v.shape
            raise ValueError(f"dispatch field {name!r} has shape {got}, expected {shape}")


# ---------------------------------------------------------------- flows


def recompute_contingency_flows(
    case: PowerSystemCase,
    dispatch: DispatchResult,
    contingency=None,
    switch_assignment=(),
    scenario: int = 0,
) -> np.ndarray:
    """DC flows (MW, case branch order) after removing the outage and opened lines.

    Injections come from the scenario's base-case dispatch. Removed
    branches carry zero flow.
    """
    removed = set(switch_assignment)
    if contingency is not None:
        removed.add(contingency)
    if not is_connected(case, tuple(removed)):
        raise IslandingError(f"removing {sorted(map(str, removed))} islands the network")
    bus_pos = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)
    inj = -case.loads.copy()
    for g, u in enumerate(case.online_units):
        inj[bus_pos[u.bus]] += dispatch.p[scenario, g]
    for i, w in enumerate(case.renewable_units):
        inj[bus_pos[w.bus]] += dispatch.pir[scenario, i]

    live = [(k, br) for k, br in enumerate(case.branches) if br.id not in removed]
    rows, cols, vals = [], [], []
    for _, br in live:
        b = case.base_mva / br.reactance
        f, t = bus_pos[br.from_bus], bus_pos[br.to_bus]
        rows += [f, t, f, t]
        cols += [f, t, t, f]
        vals += [b, b, -b, -b]
    B = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    ref = bus_pos[case.reference_bus]
    keep = np.array([i for i in range(n) if i != ref], dtype=int)
    theta = np.zeros(n)
    if keep.size:
        Bred = B[keep][:, keep].tocsc()
        try:
            theta[keep] = splu(Bred).solve(inj[keep])
        except RuntimeError as exc:
            raise IslandingError(f"singular susceptance matrix: {exc}") from None
    flows = np.zeros(len(case.branches))
    for k, br in live:
        flows[k] = case.base_mva * (theta[bus_pos[br.from_bus]] - theta[bus_pos[br.to_bus]]) / br.reactance
    return flows


# ---------------------------------------------------------------- oracle


@dataclass
class OracleResult:
    objective: float
    openings: dict[tuple[int, int], object]
    n_evaluated: int
    solution: object = None


def enumerate_switching_oracle(
    case: PowerSystemCase,
    opts: BuildOptions | None = None,
    solve_opts=None,
    max_combinations: int = 50_000,
    separable: bool = True,
) -> OracleResult:
    """Exact switching optimum by exhaustive enumeration.

    For every (scenario, contingency) pair the choices are "open nothing" or
    open one switchable line other than the outaged one, and each
    combination is solved as an LP with all line statuses fixed. Only budgets
    of 0 or 1 are supported, which is what makes enumeration exact.

    Scenarios share no constraint and the objective is a weighted sum over
    them, so with ``separable=True`` each scenario's combinations are
    enumerated on their own (other scenarios kept all-closed) and the per-
    scenario winners are joined. ``separable=False`` walks the full cross
    product.
    """
    from .solver import SolveOptions, Status, solve_lp

    opts = opts or BuildOptions()
    solve_opts = solve_opts or SolveOptions(method="simplex")
    if case.z_max not in (0, 1):
        raise ValueError("enumeration oracle supports z_max of 0 or 1 only")
    lp = build_model(case, ModelKind.E_SOPF_NR, opts)
    S, C = len(case.scenario_set), len(case.contingency_set)
    idx = lp.col_index
    zcols = lp.binary_columns

    def choices_for(s: int, c: int) -> list:
        outage = case.contingency_set.outages[c]
        out = [None]
        if case.z_max >= 1:
            out += [k.id for k in case.branches if k.switchable and k.id != outage]
        return out

    def evaluate(openings: dict) -> object:
        lb, ub = lp.lb.copy(), lp.ub.copy()
        lb[zcols] = 1.0
        ub[zcols] = 1.0
        for (s, c), k in openings.items():
            if k is not None:
                j = idx[VariableRef("z", s, c, k)]
                lb[j] = ub[j] = 0.0
        return solve_lp(lp, solve_opts, lb=lb, ub=ub)

    groups = [[(s, c) for c in range(C)] for s in range(S)] if separable else [[(s, c) for s in range(S) for c in range(C)]]
    sizes = [int(np.prod([len(choices_for(*p)) for p in g], dtype=float)) for g in groups]
    if sum(sizes) > max_combinations:
        raise ValueError(f"instance too large for enumeration: {sum(sizes)} combinations")

    count = 0
    chosen: dict = {}
    for group in groups:
        best_val, best_combo = np.inf, None
        for combo in itertools.product(*(choices_for(*p) for p in group)):
            sol = evaluate(dict(zip(group, combo)))
            count += 1
            if sol.status is Status.OPTIMAL and (best_combo is None or sol.objective < best_val - 1e-9 * max(1.0, abs(best_val))):
                best_val, best_combo = sol.objective, combo
        if best_combo is None:
            return OracleResult(np.inf, {}, count, None)
        chosen.update(zip(group, best_combo))
    final = evaluate(chosen)
    count += 1
    if final.status is not Status.OPTIMAL:
        return OracleResult(np.inf, {}, count, None)
    return OracleResult(final.objective, chosen, count, final)
