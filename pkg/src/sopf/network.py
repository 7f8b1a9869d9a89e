"""Power-system instance data model, JSON case ingestion and topology checks.

A case document is a single JSON object::

    {
      "base_mva": 100,
      "buses": [{"id": 1, "load": 108.0}, ...],
      "branches": [{"id": 1, "from_bus": 1, "to_bus": 2, "reactance": 0.0139,
                    "limit_normal": 175, "limit_emergency": 200,
                    "switchable": true}, ...],
      "thermal_units": [{"id": "U76_1", "bus": 1, "p_min": 15.2, "p_max": 76,
                         "p_initial": 60, "ramp_interval": 30, "ramp_spin": 20,
                         "cost": 16.0, "online": true}, ...],
      "renewable_units": [{"id": "W1", "bus": 1}, ...],
      "scenarios": [{"weight": 0.1, "forecast_max": {"W1": 120.0, ...}}, ...],
      "contingencies": [1, 2, ...],      # optional, default: every non-bridge
      "z_max": 1,                        # optional
      "reference_bus": 1,                # optional, default: lowest bus id
      "ignore_ramp": false               # optional
    }

Powers are in MW, reactances in per unit on ``base_mva``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "BranchRecord",
    "BusRecord",
    "CaseError",
    "CaseParseError",
    "ContingencySet",
    "PowerSystemCase",
    "RenewableUnit",
    "Scenario",
    "ScenarioSet",
    "ThermalUnit",
    "check_islanding",
    "default_contingencies",
    "dump_case",
    "load_case",
    "load_case_file",
    "load_scenarios",
    "serialize_case",
]

WEIGHT_SUM_TOL = 1e-9


class CaseError(ValueError):
    """Invalid case content; ``locus`` names the offending field."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class CaseParseError(CaseError):
    """Document is not well-formed JSON."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(message, f"line {line}, column {column}")


@dataclass(frozen=True)
class BusRecord:
    id: Any
    load: float = 0.0


@dataclass(frozen=True)
class BranchRecord:
    id: Any
    from_bus: Any
    to_bus: Any
    reactance: float
    limit_normal: float
    limit_emergency: float
    switchable: bool = True


@dataclass(frozen=True)
class ThermalUnit:
    id: Any
    bus: Any
    p_min: float
    p_max: float
    p_initial: float | None
    ramp_interval: float
    ramp_spin: float
    cost: float
    online: bool = True


@dataclass(frozen=True)
class RenewableUnit:
    id: Any
    bus: Any


@dataclass(frozen=True)
class Scenario:
    weight: float
    forecast_max: Mapping[Any, float]
    name: str | None = None


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, i: int) -> Scenario:
        return self.scenarios[i]

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.scenarios], dtype=float)


@dataclass(frozen=True)
class ContingencySet:
    outages: tuple[Any, ...]

    def __len__(self) -> int:
        return len(self.outages)

    def __iter__(self):
        return iter(self.outages)


@dataclass(frozen=True)
class PowerSystemCase:
    """Validated problem instance. Build through :func:`make_case` or :func:`load_case`."""

    base_mva: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    thermal_units: tuple[ThermalUnit, ...]
    renewable_units: tuple[RenewableUnit, ...]
    scenario_set: ScenarioSet
    contingency_set: ContingencySet
    z_max: int = 1
    reference_bus: Any = None
    ignore_ramp: bool = False
    _bus_index: dict = field(default=None, repr=False, compare=False)
    _branch_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {b.id: i for i, b in enumerate(self.buses)})
        object.__setattr__(self, "_branch_index", {k.id: i for i, k in enumerate(self.branches)})

    # index helpers
    def bus_index(self, bus_id) -> int:
        return self._bus_index[bus_id]

    def branch_index(self, branch_id) -> int:
        return self._branch_index[branch_id]

    @property
    def online_units(self) -> tuple[ThermalUnit, ...]:
        """Set G: offline units stay in the file but are not dispatchable."""
        return tuple(u for u in self.thermal_units if u.online)

    @property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses], dtype=float)

    @property
    def total_load(self) -> float:
        return float(self.loads.sum())

    def with_updates(self, **changes) -> PowerSystemCase:
        """Return a re-validated copy with some fields replaced."""
        new = replace(self, **changes)
        _validate(new)
        return new

    def with_load(self, bus_id, load: float) -> PowerSystemCase:
        buses = tuple(replace(b, load=load) if b.id == bus_id else b for b in self.buses)
        return self.with_updates(buses=buses)


# ---------------------------------------------------------------- topology


def _connected(n_bus: int, ends: np.ndarray) -> bool:
    if n_bus <= 1:
        return True
    if len(ends) == 0:
        return False
    data = np.ones(len(ends))
    graph = coo_matrix((data, (ends[:, 0], ends[:, 1])), shape=(n_bus, n_bus))
    n_comp, _ = connected_components(graph, directed=False)
    return n_comp == 1


def _branch_ends(case: PowerSystemCase, exclude: set[int] = frozenset()) -> np.ndarray:
    rows = [
        (case.bus_index(k.from_bus), case.bus_index(k.to_bus))
        for i, k in enumerate(case.branches)
        if i not in exclude
    ]
    return np.array(rows, dtype=int).reshape(-1, 2)


def is_connected(case: PowerSystemCase, removed=()) -> bool:
    """True if the buses stay connected once the given branch ids are out."""
    exclude = {case.branch_index(b) for b in removed}
    return _connected(len(case.buses), _branch_ends(case, exclude))


def check_islanding(case: PowerSystemCase, removed) -> bool:
    """Return True iff the network stays connected without branch ``removed``.

    Despite the name, ``True`` means *no* island is created.
    """
    if removed not in case._branch_index:
        raise KeyError(f"unknown branch id {removed!r}")
    return is_connected(case, (removed,))


def default_contingencies(case: PowerSystemCase) -> ContingencySet:
    """All single-branch outages that keep the network connected, in branch order."""
    return ContingencySet(tuple(k.id for k in case.branches if check_islanding(case, k.id)))


# ---------------------------------------------------------------- validation


def _validate(case: PowerSystemCase) -> None:
    if not (case.base_mva > 0 and math.isfinite(case.base_mva)):
        raise CaseError("must be a positive number", "base_mva")
    if not case.buses:
        raise CaseError("at least one bus required", "buses")

    if len(case._bus_index) != len(case.buses):
        raise CaseError("bus ids must be unique", "buses")
    for i, b in enumerate(case.buses):
        if not (b.load >= 0 and math.isfinite(b.load)):
            raise CaseError("load must be finite and >= 0", f"buses[{i}].load")

    if len(case._branch_index) != len(case.branches):
        raise CaseError("branch ids must be unique", "branches")
    for i, k in enumerate(case.branches):
        loc = f"branches[{i}]"
        for end in ("from_bus", "to_bus"):
            if getattr(k, end) not in case._bus_index:
                raise CaseError(f"unknown bus {getattr(k, end)!r}", f"{loc}.{end}")
        if k.from_bus == k.to_bus:
            raise CaseError("from_bus must differ from to_bus", loc)
        if k.reactance == 0 or not math.isfinite(k.reactance):
            raise CaseError("reactance must be finite and nonzero", f"{loc}.reactance")
        if not (0 < k.limit_normal <= k.limit_emergency):
            raise CaseError("need 0 < limit_normal <= limit_emergency", loc)

    unit_ids = set()
    for i, u in enumerate(case.thermal_units):
        loc = f"thermal_units[{i}]"
        if u.id in unit_ids:
            raise CaseError(f"duplicate unit id {u.id!r}", loc)
        unit_ids.add(u.id)
        if u.bus not in case._bus_index:
            raise CaseError(f"unknown bus {u.bus!r}", f"{loc}.bus")
        if not (0 <= u.p_min <= u.p_max):
            raise CaseError("need 0 <= p_min <= p_max", loc)
        for name in ("ramp_interval", "ramp_spin", "cost"):
            if not getattr(u, name) >= 0:
                raise CaseError("must be >= 0", f"{loc}.{name}")
        if u.online and u.p_initial is None and not case.ignore_ramp:
            raise CaseError("p_initial required for online units unless ignore_ramp", loc)

    ren_ids = set()
    for i, w in enumerate(case.renewable_units):
        loc = f"renewable_units[{i}]"
        if w.id in ren_ids or w.id in unit_ids:
            raise CaseError(f"duplicate unit id {w.id!r}", loc)
        ren_ids.add(w.id)
        if w.bus not in case._bus_index:
            raise CaseError(f"unknown bus {w.bus!r}", f"{loc}.bus")

    if len(case.scenario_set) == 0:
        raise CaseError("at least one scenario required", "scenarios")
    for s, sc in enumerate(case.scenario_set):
        loc = f"scenarios[{s}]"
        if not sc.weight > 0:
            raise CaseError("weight must be > 0", f"{loc}.weight")
        missing = ren_ids - set(sc.forecast_max)
        if missing:
            raise CaseError(f"forecast_max missing units {sorted(map(str, missing))}", loc)
        extra = set(sc.forecast_max) - ren_ids
        if extra:
            raise CaseError(f"forecast_max names unknown units {sorted(map(str, extra))}", loc)
        for uid, v in sc.forecast_max.items():
            if not (v >= 0 and math.isfinite(v)):
                raise CaseError("forecast must be finite and >= 0", f"{loc}.forecast_max.{uid}")
    total = float(sum(sc.weight for sc in case.scenario_set))
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise CaseError(f"scenario weights sum to {total!r}, not 1", "scenarios.weight")

    if not isinstance(case.z_max, int) or case.z_max < 0:
        raise CaseError("must be a non-negative integer", "z_max")
    if case.reference_bus not in case._bus_index:
        raise CaseError(f"unknown bus {case.reference_bus!r}", "reference_bus")

    if not is_connected(case):
        raise CaseError("network is not connected", "branches")
    seen = set()
    for i, c in enumerate(case.contingency_set):
        loc = f"contingencies[{i}]"
        if c not in case._branch_index:
            raise CaseError(f"unknown branch {c!r}", loc)
        if c in seen:
            raise CaseError(f"duplicate outage {c!r}", loc)
        seen.add(c)
        if not check_islanding(case, c):
            raise CaseError(f"outage of branch {c!r} islands the network", loc)


def _lowest_id(ids: Sequence):
    try:
        return min(ids)
    except TypeError:
        return min(ids, key=str)


def make_case(
    buses,
    branches,
    thermal_units,
    renewable_units,
    scenarios,
    contingencies=None,
    *,
    base_mva: float = 100.0,
    z_max: int = 1,
    reference_bus=None,
    ignore_ramp: bool = False,
) -> PowerSystemCase:
    """Assemble and validate a case from record sequences.

    ``contingencies=None`` selects :func:`default_contingencies`.
    """
    buses = tuple(buses)
    if reference_bus is None and buses:
        reference_bus = _lowest_id([b.id for b in buses])
    scen = scenarios if isinstance(scenarios, ScenarioSet) else ScenarioSet(tuple(scenarios))
    case = PowerSystemCase(
        base_mva=float(base_mva),
        buses=buses,
        branches=tuple(branches),
        thermal_units=tuple(thermal_units),
        renewable_units=tuple(renewable_units),
        scenario_set=scen,
        contingency_set=ContingencySet(()),
        z_max=z_max,
        reference_bus=reference_bus,
        ignore_ramp=ignore_ramp,
    )
    _validate(case)
    if contingencies is None:
        cset = default_contingencies(case)
    else:
        cset = contingencies if isinstance(contingencies, ContingencySet) else ContingencySet(tuple(contingencies))
    return case.with_updates(contingency_set=cset)


# ---------------------------------------------------------------- JSON I/O

_REQUIRED = ("base_mva", "buses", "branches", "thermal_units", "renewable_units", "scenarios")


def _num(obj: Mapping, key: str, loc: str, default=None) -> float:
    if key not in obj:
        if default is not None:
            return default
        raise CaseError("missing field", f"{loc}.{key}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseError(f"expected a number, got {v!r}", f"{loc}.{key}")
    return float(v)


def _ident(obj: Mapping, key: str, loc: str):
    if key not in obj:
        raise CaseError("missing field", f"{loc}.{key}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise CaseError(f"identifier must be int or str, got {v!r}", f"{loc}.{key}")
    return v


def _records(doc: Mapping, key: str) -> list:
    v = doc[key]
    if not isinstance(v, list):
        raise CaseError("expected a list", key)
    for i, item in enumerate(v):
        if not isinstance(item, dict):
            raise CaseError("expected an object", f"{key}[{i}]")
    return v


def _parse_scenarios(raw, unit_ids: Mapping[str, Any], key: str = "scenarios") -> ScenarioSet:
    if not isinstance(raw, list):
        raise CaseError("expected a list", key)
    out = []
    for s, item in enumerate(raw):
        loc = f"{key}[{s}]"
        if not isinstance(item, dict):
            raise CaseError("expected an object", loc)
        fm = item.get("forecast_max")
        if not isinstance(fm, dict):
            raise CaseError("expected an object", f"{loc}.forecast_max")
        forecast = {}
        for name, v in fm.items():
            # JSON object keys are strings; map back to the unit's own id
            uid = unit_ids.get(name, name)
            forecast[uid] = _num(fm, name, f"{loc}.forecast_max")
        name = item.get("name")
        out.append(Scenario(weight=_num(item, "weight", loc), forecast_max=forecast, name=name))
    return ScenarioSet(tuple(out))


def _decode(text: str, what: str = "document"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed {what}: {exc.msg}", exc.lineno, exc.colno) from None


def load_case(text: str) -> PowerSystemCase:
    """Parse and validate a JSON case document."""
    doc = _decode(text, "case document")
    if not isinstance(doc, dict):
        raise CaseError("top level must be an object")
    for key in _REQUIRED:
        if key not in doc:
            raise CaseError("missing top-level field", key)

    buses = [
        BusRecord(id=_ident(b, "id", f"buses[{i}]"), load=_num(b, "load", f"buses[{i}]", 0.0))
        for i, b in enumerate(_records(doc, "buses"))
    ]
    branches = []
    for i, k in enumerate(_records(doc, "branches")):
        loc = f"branches[{i}]"
        sw = k.get("switchable", True)
        if not isinstance(sw, bool):
            raise CaseError("expected a boolean", f"{loc}.switchable")
        branches.append(
            BranchRecord(
                id=_ident(k, "id", loc),
                from_bus=_ident(k, "from_bus", loc),
                to_bus=_ident(k, "to_bus", loc),
                reactance=_num(k, "reactance", loc),
                limit_normal=_num(k, "limit_normal", loc),
                limit_emergency=_num(k, "limit_emergency", loc),
                switchable=sw,
            )
        )
    units = []
    for i, u in enumerate(_records(doc, "thermal_units")):
        loc = f"thermal_units[{i}]"
        online = u.get("online", True)
        if not isinstance(online, bool):
            raise CaseError("expected a boolean", f"{loc}.online")
        p0 = u.get("p_initial")
        units.append(
            ThermalUnit(
                id=_ident(u, "id", loc),
                bus=_ident(u, "bus", loc),
                p_min=_num(u, "p_min", loc),
                p_max=_num(u, "p_max", loc),
                p_initial=None if p0 is None else _num(u, "p_initial", loc),
                ramp_interval=_num(u, "ramp_interval", loc),
                ramp_spin=_num(u, "ramp_spin", loc),
                cost=_num(u, "cost", loc),
                online=online,
            )
        )
    renewables = [
        RenewableUnit(id=_ident(w, "id", f"renewable_units[{i}]"), bus=_ident(w, "bus", f"renewable_units[{i}]"))
        for i, w in enumerate(_records(doc, "renewable_units"))
    ]
    scenarios = _parse_scenarios(doc["scenarios"], {str(w.id): w.id for w in renewables})

    contingencies = doc.get("contingencies")
    if contingencies is not None and not isinstance(contingencies, list):
        raise CaseError("expected a list", "contingencies")
    z_max = doc.get("z_max", 1)
    if isinstance(z_max, bool) or not isinstance(z_max, int):
        raise CaseError("must be a non-negative integer", "z_max")
    ignore_ramp = doc.get("ignore_ramp", False)
    if not isinstance(ignore_ramp, bool):
        raise CaseError("expected a boolean", "ignore_ramp")

    return make_case(
        buses,
        branches,
        units,
        renewables,
        scenarios,
        contingencies,
        base_mva=_num(doc, "base_mva", "case"),
        z_max=z_max,
        reference_bus=doc.get("reference_bus"),
        ignore_ramp=ignore_ramp,
    )


def load_case_file(path: str | Path, scenarios: str | Path | None = None) -> PowerSystemCase:
    """Read a case file, optionally swapping in a scenario overlay file."""
    case = load_case(Path(path).read_text())
    if scenarios is not None:
        case = case.with_updates(scenario_set=load_scenarios(Path(scenarios).read_text(), case))
    return case


def load_scenarios(text: str, case: PowerSystemCase) -> ScenarioSet:
    """Parse a scenario overlay: either a bare list or ``{"scenarios": [...]}``."""
    doc = _decode(text, "scenario document")
    if isinstance(doc, dict):
        if "scenarios" not in doc:
            raise CaseError("missing top-level field", "scenarios")
        doc = doc["scenarios"]
    scen = _parse_scenarios(doc, {str(w.id): w.id for w in case.renewable_units})
    case.with_updates(scenario_set=scen)  # validates coverage and weights against the case
    return scen


def serialize_case(case: PowerSystemCase) -> dict:
    """Plain-dict form of a case, inverse of :func:`load_case`."""

    def unit(u: ThermalUnit) -> dict:
        d = {
            "id": u.id,
            "bus": u.bus,
            "p_min": u.p_min,
            "p_max": u.p_max,
            "ramp_interval": u.ramp_interval,
            "ramp_spin": u.ramp_spin,
            "cost": u.cost,
            "online": u.online,
        }
        if u.p_initial is not None:
            d["p_initial"] = u.p_initial
        return d

    def scenario(sc: Scenario) -> dict:
        d = {"weight": sc.weight, "forecast_max": {str(k): v for k, v in sc.forecast_max.items()}}
        if sc.name is not None:
            d["name"] = sc.name
        return d

    return {
        "base_mva": case.base_mva,
        "buses": [{"id": b.id, "load": b.load} for b in case.buses],
        "branches": [
            {
                "id": k.id,
                "from_bus": k.from_bus,
                "to_bus": k.to_bus,
                "reactance": k.reactance,
                "limit_normal": k.limit_normal,
                "limit_emergency": k.limit_emergency,
                "switchable": k.switchable,
            }
            for k in case.branches
        ],
        "thermal_units": [unit(u) for u in case.thermal_units],
        "renewable_units": [{"id": w.id, "bus": w.bus} for w in case.renewable_units],
        "scenarios": [scenario(sc) for sc in case.scenario_set],
        "contingencies": list(case.contingency_set.outages),
        "z_max": case.z_max,
        "reference_bus": case.reference_bus,
        "ignore_ramp": case.ignore_ramp,
    }


def dump_case(case: PowerSystemCase) -> str:
    return json.dumps(serialize_case(case), indent=1)
