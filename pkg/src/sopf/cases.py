"""Bundled cases: small hand-checkable networks, a random small-instance
generator, and the one-area RTS-96 system."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .network import (
    BranchRecord,
    BusRecord,
    PowerSystemCase,
    RenewableUnit,
    Scenario,
    ThermalUnit,
    load_case,
    make_case,
)

__all__ = [
    "four_bus_switching",
    "one_bus",
    "path3",
    "random_instance",
    "rts96",
    "rts96_path",
    "rts96_reduced",
    "select_scenarios",
    "triangle",
    "two_bus",
]


def _unit(uid, bus, cost, p_max=200.0, p_min=0.0, p0=None, ramp=None, spin=None) -> ThermalUnit:
    return ThermalUnit(
        id=uid, bus=bus, p_min=p_min, p_max=p_max,
        p_initial=p_max / 2 if p0 is None else p0,
        ramp_interval=p_max if ramp is None else ramp,
        ramp_spin=p_max if spin is None else spin,
        cost=cost,
    )


def one_bus(load: float = 50.0) -> PowerSystemCase:
    """Single bus, single unit, no branches."""
    return make_case(
        [BusRecord(1, load)], [], [_unit("G1", 1, 20.0, p_max=100.0)], [],
        [Scenario(1.0, {})], [],
    )


def two_bus(limit: float = 60.0, load: float = 100.0) -> PowerSystemCase:
    """Cheap unit (10 $/MWh) at bus 1, expensive unit (50 $/MWh) and the load at bus 2."""
    return make_case(
        [BusRecord(1, 0.0), BusRecord(2, load)],
        [BranchRecord(1, 1, 2, 0.1, limit, max(limit, 1.5 * limit))],
        [_unit("G1", 1, 10.0), _unit("G2", 2, 50.0)],
        [],
        [Scenario(1.0, {})],
        [],
    )


def triangle(limit: float = 200.0, n_scenarios: int = 1, load: float = 90.0) -> PowerSystemCase:
    """Three equal-reactance branches; supply at bus 1, load at bus 3."""
    branches = [
        BranchRecord(1, 1, 2, 0.1, limit, limit),
        BranchRecord(2, 2, 3, 0.1, limit, limit),
        BranchRecord(3, 1, 3, 0.1, limit, limit),
    ]
    scen = [Scenario(1.0 / n_scenarios, {"W1": 10.0 * (s + 1)}) for s in range(n_scenarios)]
    return make_case(
        [BusRecord(1, 0.0), BusRecord(2, 0.0), BusRecord(3, load)],
        branches,
        [_unit("G1", 1, 10.0), _unit("G2", 3, 40.0)],
        [RenewableUnit("W1", 2)],
        scen,
    )


def path3() -> PowerSystemCase:
    """Buses 1-2-3 in a line: both branches are bridges."""
    return make_case(
        [BusRecord(1, 0.0), BusRecord(2, 20.0), BusRecord(3, 20.0)],
        [BranchRecord(1, 1, 2, 0.1, 100, 100), BranchRecord(2, 2, 3, 0.1, 100, 100)],
        [_unit("G1", 1, 10.0), _unit("G2", 3, 30.0)],
        [],
        [Scenario(1.0, {})],
    )


def four_bus_switching() -> PowerSystemCase:
    """Four buses where opening a line after an outage relieves an overload.

    Wind and the cheap unit sit at bus 1, most load at bus 4. Without
    switching, the post-outage emergency limits force the expensive unit at
    bus 4 up and curtail wind in the high-wind scenario; opening one line in
    the post-contingency network removes the curtailment
    and lowers expected cost to the N-SOPF level. Several openings reach the
    optimum, so tests should compare costs rather than topologies.
    """
    branches = [
        BranchRecord(1, 1, 2, 0.218, 51.0, 65.0),
        BranchRecord(2, 2, 3, 0.06, 28.0, 30.0),
        BranchRecord(3, 3, 4, 0.295, 42.0, 52.0),
        BranchRecord(4, 4, 1, 0.296, 64.0, 69.0),
        BranchRecord(5, 2, 4, 0.156, 31.0, 35.0),
        BranchRecord(6, 1, 3, 0.126, 26.0, 35.0),
    ]
    return make_case(
        [BusRecord(1, 0.0), BusRecord(2, 16.0), BusRecord(3, 0.0), BusRecord(4, 114.0)],
        branches,
        [_unit("G1", 1, 11.0, p_max=195.0), _unit("G2", 4, 52.0, p_max=195.0)],
        [RenewableUnit("W1", 1)],
        [Scenario(0.45, {"W1": 64.0}, "high"), Scenario(0.55, {"W1": 35.0}, "low")],
        [1, 2],
    )


def random_instance(seed: int, n_bus: int | None = None, n_scenarios: int | None = None, n_cont: int = 2) -> PowerSystemCase:
    """Small meshed instance for oracle tests.

    3 to 4 buses, at most 6 branches, two thermal units (cheap far from the
    load, expensive at it), one renewable unit, one or two scenarios and at
    most ``n_cont`` contingencies.
    """
    rng = np.random.default_rng(seed)
    n = int(n_bus or rng.integers(3, 5))
    S = int(n_scenarios or rng.integers(1, 3))
    edges = [(i, i + 1) for i in range(1, n)] + [(n, 1)]
    chords = [(a, b) for a in range(1, n + 1) for b in range(a + 2, n + 1) if (a, b) != (1, n)]
    rng.shuffle(chords)
    edges += chords[: 6 - len(edges)] if len(edges) < 6 else []
    edges = edges[:6]
    branches = []
    for k, (a, b) in enumerate(edges, 1):
        x = float(np.round(rng.uniform(0.05, 0.3), 3))
        la = float(np.round(rng.uniform(25, 80)))
        lc = float(np.round(la * rng.uniform(1.0, 1.4)))
        branches.append(BranchRecord(k, a, b, x, la, lc))
    load_bus = n
    loads = {b: 0.0 for b in range(1, n + 1)}
    loads[load_bus] = float(np.round(rng.uniform(60, 120)))
    if n > 3:
        loads[2] = float(np.round(rng.uniform(0, 30)))
    buses = [BusRecord(b, loads[b]) for b in range(1, n + 1)]
    total = sum(loads.values())
    units = [
        _unit("G1", 1, float(np.round(rng.uniform(5, 15))), p_max=total * 1.5),
        _unit("G2", load_bus, float(np.round(rng.uniform(40, 60))), p_max=total * 1.5),
    ]
    wind_bus = int(rng.integers(1, n))
    ren = [RenewableUnit("W1", wind_bus)]
    raw = rng.uniform(1, 2, S)
    w = raw / raw.sum()
    w[-1] = 1.0 - w[:-1].sum()
    scen = [Scenario(float(w[s]), {"W1": float(np.round(total * rng.uniform(0.2, 0.7)))}) for s in range(S)]
    case = make_case(buses, branches, units, ren, scen)
    outs = case.contingency_set.outages[: n_cont]
    return case.with_updates(contingency_set=type(case.contingency_set)(tuple(outs)))


def rts96_path():
    return resources.files("sopf.data").joinpath("rts96_one_area.json")


def select_scenarios(case: PowerSystemCase, indices) -> PowerSystemCase:
    """Keep the scenarios at ``indices`` with weights renormalized to sum to one."""
    kept = [case.scenario_set.scenarios[i] for i in indices]
    total = sum(s.weight for s in kept)
    weights = [s.weight / total for s in kept]
    weights[-1] = 1.0 - sum(weights[:-1])
    scen = tuple(Scenario(w, s.forecast_max, s.name) for w, s in zip(weights, kept))
    return case.with_updates(scenario_set=type(case.scenario_set)(scen))


def rts96(n_scenarios: int | None = None, contingencies=None) -> PowerSystemCase:
    """One-area RTS-96 with ten renewable scenarios.

    ``n_scenarios`` keeps the first scenarios with renormalized weights;
    ``contingencies`` replaces the outage list.
    """
    case = load_case(rts96_path().read_text())
    if n_scenarios is not None:
        case = select_scenarios(case, range(n_scenarios))
    if contingencies is not None:
        case = case.with_updates(contingency_set=type(case.contingency_set)(tuple(contingencies)))
    return case


# outages with the largest single-contingency cost impact, most costly first
RTS96_KEY_OUTAGES = (12, 13, 31, 27, 7, 16)


def rts96_reduced() -> PowerSystemCase:
    """Three scenarios (low, middle, high wind) and the six most costly outages.

    Sized for the switching model, whose binary count grows with
    scenarios x outages x lines.
    """
    return select_scenarios(rts96(contingencies=RTS96_KEY_OUTAGES), (0, 4, 9))
