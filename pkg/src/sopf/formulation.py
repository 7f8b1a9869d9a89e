"""Assembly of the four stochastic DC-OPF models as tagged sparse programs.

Every row and every bounded column carries a provenance tag naming the
dispatch-model equation it implements (``eq03`` ... ``eq21``), so a built
program can be audited against the model taxonomy:

============  ====================  ==================  =====================================
model         power balance         network limits      other
============  ====================  ==================  =====================================
R_SOPF        eq03                  --                  eq04-eq07, eq09-eq13
N_SOPF        eq03                  eq08                eq04-eq07, eq09-eq13
E_SOPF        eq03, eq14            eq08, eq15          eq04-eq07, eq09-eq13, eq16, eq17
E_SOPF_NR     eq03, eq14            eq08, eq18          eq04-eq07, eq09-eq13, eq17, eq19-eq21
============  ====================  ==================  =====================================

Power is kept in MW throughout; angles are radians and reactances per unit,
so a branch flow is ``base_mva * (theta_from - theta_to) / x``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

from .network import PowerSystemCase

__all__ = [
    "BuildOptions",
    "LinearProgram",
    "ModelKind",
    "ModelError",
    "RowTag",
    "VariableRef",
    "add_base_constraints",
    "add_contingency_constraints",
    "add_reconfiguration_constraints",
    "add_thermal_limit_rows",
    "big_m",
    "build_model",
    "expected_tags",
]


class ModelError(ValueError):
    pass


class ModelKind(enum.Enum):
    R_SOPF = "r"
    N_SOPF = "n"
    E_SOPF = "e"
    E_SOPF_NR = "enr"

    @property
    def has_base_limits(self) -> bool:
        return self is not ModelKind.R_SOPF

    @property
    def has_contingencies(self) -> bool:
        return self in (ModelKind.E_SOPF, ModelKind.E_SOPF_NR)

    @property
    def label(self) -> str:
        return {"r": "R-SOPF", "n": "N-SOPF", "e": "E-SOPF", "enr": "E-SOPFwNR"}[self.value]

    @classmethod
    def parse(cls, text: str) -> ModelKind:
        t = text.strip().lower().replace("-", "_")
        for kind in cls:
            if t in (kind.value, kind.name.lower(), kind.label.lower().replace("-", "_")):
                return kind
        raise ValueError(f"unknown model {text!r}")


def expected_tags(kind: ModelKind, has_fixed_lines: bool = False) -> set[str]:
    """Equation tags a build of ``kind`` must contain, and nothing else.

    ``has_fixed_lines`` adds eq15/eq16 for E_SOPF_NR builds that contain
    non-switchable branches, which keep the plain contingency form.
    """
    tags = {3, 4, 5, 6, 7, 9, 10, 11, 12, 13}
    if kind.has_base_limits:
        tags.add(8)
    if kind is ModelKind.E_SOPF:
        tags |= {14, 15, 16, 17}
    elif kind is ModelKind.E_SOPF_NR:
        tags |= {14, 17, 18, 19, 20, 21}
        if has_fixed_lines:
            tags |= {15, 16}
    return {f"eq{t:02d}" for t in tags}


VARIABLE_KINDS = ("p", "r", "pIR", "cIR", "theta", "flow", "theta_c", "flow_c", "z")

_UNSAFE = re.compile(r"[^A-Za-z0-9_.\-]")


def _clean(x) -> str:
    return _UNSAFE.sub("_", str(x))


@dataclass(frozen=True, order=True)
class VariableRef:
    kind: str
    scenario: int
    contingency: int | None
    element: object

    @property
    def name(self) -> str:
        c = "" if self.contingency is None else f"_c{self.contingency}"
        return f"{self.kind}_s{self.scenario}{c}_{_clean(self.element)}"


@dataclass(frozen=True)
class RowTag:
    eq: int
    scenario: int | None
    contingency: int | None
    element: str

    @property
    def equation(self) -> str:
        return f"eq{self.eq:02d}"

    @property
    def name(self) -> str:
        s = "-" if self.scenario is None else self.scenario
        c = "-" if self.contingency is None else self.contingency
        return f"eq{self.eq:02d}_s{s}_c{c}_{_clean(self.element)}"


class Row(NamedTuple):
    indices: tuple[int, ...]
    coefs: tuple[float, ...]
    sense: str
    rhs: float
    tag: RowTag


@dataclass(frozen=True)
class BuildOptions:
    """Build knobs.

    ``big_m_mode`` is ``"tight"`` (per-line ``2 * angle_bound / x``) or a
    positive number used for every line, in per unit.
    ``angle_bound=None`` leaves bus angles free (not allowed with tight big-M).
    """

    angle_bound: float | None = math.pi
    big_m_mode: str | float = "tight"
    enable_reserve: bool = True
    ignore_ramp: bool = False

    def __post_init__(self):
        if self.angle_bound is not None and not self.angle_bound > 0:
            raise ValueError("angle_bound must be > 0")
        if self.big_m_mode != "tight":
            if isinstance(self.big_m_mode, str) or not float(self.big_m_mode) > 0:
                raise ValueError(f"big_m_mode must be 'tight' or a positive number, got {self.big_m_mode!r}")


def big_m(branch, opts: BuildOptions) -> float:
    """Big-M for the switched flow equations of ``branch``, in per unit."""
    if opts.big_m_mode == "tight":
        if opts.angle_bound is None:
            raise ValueError("tight big-M needs a finite angle_bound")
        return 2.0 * opts.angle_bound / abs(branch.reactance)
    return float(opts.big_m_mode)


class LinearProgram:
    """Sparse program ``min c.x  s.t.  rows (<=, =, >=) rhs,  lb <= x <= ub``.

    Immutable once built; :meth:`with_bounds` shares the matrix.
    """

    def __init__(self, kind, columns, lb, ub, obj, integer, col_tags, A, sense, rhs, row_tags, case=None):
        self.kind = kind
        self.columns: tuple[VariableRef, ...] = tuple(columns)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.obj = np.asarray(obj, dtype=float)
        self.integer = np.asarray(integer, dtype=bool)
        self.col_tags: tuple[str | None, ...] = tuple(col_tags)
        self.A: sp.csr_matrix = A
        self.sense = np.asarray(sense)
        self.rhs = np.asarray(rhs, dtype=float)
        self.row_tags: tuple[RowTag, ...] = tuple(row_tags)
        self.case = case
        for arr in (self.lb, self.ub, self.obj, self.integer, self.sense, self.rhs):
            arr.flags.writeable = False
        self._col_index = None
        self._row_index = None

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.row_tags)

    @property
    def nnz(self) -> int:
        return self.A.nnz

    @property
    def col_index(self) -> dict[VariableRef, int]:
        if self._col_index is None:
            self._col_index = {ref: j for j, ref in enumerate(self.columns)}
        return self._col_index

    @property
    def row_index(self) -> dict[str, int]:
        if self._row_index is None:
            self._row_index = {t.name: i for i, t in enumerate(self.row_tags)}
        return self._row_index

    @property
    def col_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def row_names(self) -> list[str]:
        return [t.name for t in self.row_tags]

    @property
    def binary_columns(self) -> np.ndarray:
        return np.flatnonzero(self.integer)

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == "<=", -np.inf, self.rhs)
        hi = np.where(self.sense == ">=", np.inf, self.rhs)
        return lo, hi

    def rows(self) -> Iterator[Row]:
        A = self.A
        for i, tag in enumerate(self.row_tags):
            sl = slice(A.indptr[i], A.indptr[i + 1])
            yield Row(tuple(A.indices[sl].tolist()), tuple(A.data[sl].tolist()), str(self.sense[i]), float(self.rhs[i]), tag)

    def tag_multiset(self) -> dict[str, int]:
        """Count of rows and bounded columns per equation tag."""
        counts: dict[str, int] = {}
        for t in self.row_tags:
            counts[t.equation] = counts.get(t.equation, 0) + 1
        for t in self.col_tags:
            if t is not None and t != "bound":
                counts[t] = counts.get(t, 0) + 1
        return counts

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj @ x)

    def with_bounds(self, lb=None, ub=None) -> LinearProgram:
        return LinearProgram(
            self.kind,
            self.columns,
            self.lb if lb is None else lb,
            self.ub if ub is None else ub,
            self.obj,
            self.integer,
            self.col_tags,
            self.A,
            self.sense,
            self.rhs,
            self.row_tags,
            self.case,
        )

    def relaxed(self) -> LinearProgram:
        lp = self.with_bounds()
        lp.integer = np.zeros(self.n_cols, dtype=bool)
        return lp

    def fix(self, assignment: dict[int, float]) -> LinearProgram:
        """Copy with the given columns fixed; fixed columns lose integrality."""
        lb, ub = self.lb.copy(), self.ub.copy()
        integer = self.integer.copy()
        for j, v in assignment.items():
            lb[j] = ub[j] = v
            integer[j] = False
        lp = self.with_bounds(lb, ub)
        lp.integer = integer
        return lp

    def __repr__(self) -> str:
        kind = self.kind.label if self.kind else "LP"
        return f"<LinearProgram {kind}: {self.n_cols} cols, {self.n_rows} rows, {self.nnz} nnz, {self.integer.sum()} binary>"


class _Builder:
    def __init__(self, case: PowerSystemCase, kind: ModelKind | None):
        self.case = case
        self.kind = kind
        self.cols: list[VariableRef] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.integer: list[bool] = []
        self.col_tags: list[str | None] = []
        self.index: dict[VariableRef, int] = {}
        self.r_idx: list[int] = []
        self.c_idx: list[int] = []
        self.vals: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.tags: list[RowTag] = []

    def col(self, ref: VariableRef, lb: float, ub: float, tag=None, obj=0.0, integer=False) -> int:
        if lb > ub:
            raise ModelError(f"infeasible bounds [{lb}, {ub}] on {ref.name}")
        j = len(self.cols)
        self.cols.append(ref)
        self.lb.append(lb)
        self.ub.append(ub)
        self.obj.append(obj)
        self.integer.append(integer)
        self.col_tags.append(tag)
        self.index[ref] = j
        return j

    def set_bounds(self, j: int, lb: float, ub: float, tag: str) -> None:
        self.lb[j], self.ub[j], self.col_tags[j] = lb, ub, tag

    def row(self, terms, sense: str, rhs: float, tag: RowTag) -> None:
        i = len(self.tags)
        merged: dict[int, float] = {}
        for j, a in terms:
            merged[j] = merged.get(j, 0.0) + a
        for j, a in merged.items():
            if a != 0.0:
                self.r_idx.append(i)
                self.c_idx.append(j)
                self.vals.append(a)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    def finish(self) -> LinearProgram:
        m, n = len(self.tags), len(self.cols)
        A = sp.csr_matrix((self.vals, (self.r_idx, self.c_idx)), shape=(m, n))
        A.sort_indices()
        return LinearProgram(
            self.kind, self.cols, self.lb, self.ub, self.obj, self.integer, self.col_tags,
            A, np.array(self.sense, dtype="<U2"), self.rhs, self.tags, self.case,
        )


# ---------------------------------------------------------------- builders


def _angle_bounds(case, opts, bus_id) -> tuple[float, float, str | None]:
    if bus_id == case.reference_bus:
        return 0.0, 0.0, "bound"
    if opts.angle_bound is None:
        return -np.inf, np.inf, None
    return -opts.angle_bound, opts.angle_bound, "bound"


def _base_columns(b: _Builder, case: PowerSystemCase, opts: BuildOptions) -> None:
    weights = case.scenario_set.weights
    for s, scen in enumerate(case.scenario_set):
        for u in case.online_units:
            b.col(VariableRef("p", s, None, u.id), u.p_min, u.p_max, "eq05", obj=weights[s] * u.cost)
        for u in case.online_units:
            hi = u.ramp_spin if opts.enable_reserve else 0.0
            b.col(VariableRef("r", s, None, u.id), 0.0, hi, "eq10")
        for w in case.renewable_units:
            b.col(VariableRef("pIR", s, None, w.id), 0.0, scen.forecast_max[w.id], "eq07")
        for w in case.renewable_units:
            b.col(VariableRef("cIR", s, None, w.id), 0.0, scen.forecast_max[w.id], "eq07")
        for bus in case.buses:
            lo, hi, tag = _angle_bounds(case, opts, bus.id)
            b.col(VariableRef("theta", s, None, bus.id), lo, hi, tag)
        for k in case.branches:
            if opts.angle_bound is None:
                lo, hi, tag = -np.inf, np.inf, None
            else:
                # implied by the angle bounds; not a thermal limit
                cap = case.base_mva * 2.0 * opts.angle_bound / abs(k.reactance)
                lo, hi, tag = -cap, cap, "bound"
            b.col(VariableRef("flow", s, None, k.id), lo, hi, tag)


def _balance_terms(b: _Builder, case, s: int, bus_id, flow_kind: str, c: int | None):
    terms = []
    for u in case.online_units:
        if u.bus == bus_id:
            terms.append((b.index[VariableRef("p", s, None, u.id)], 1.0))
    for w in case.renewable_units:
        if w.bus == bus_id:
            terms.append((b.index[VariableRef("pIR", s, None, w.id)], 1.0))
    for k in case.branches:
        j = b.index[VariableRef(flow_kind, s, c, k.id)]
        if k.to_bus == bus_id:
            terms.append((j, 1.0))
        if k.from_bus == bus_id:
            terms.append((j, -1.0))
    return terms


def add_base_constraints(b: _Builder, case: PowerSystemCase, opts: BuildOptions) -> None:
    """Base-case rows shared by all four models (balance, ramp, split, flow, reserve)."""
    ignore_ramp = opts.ignore_ramp or case.ignore_ramp
    units = case.online_units
    idx = b.index
    for s, scen in enumerate(case.scenario_set):
        for bus in case.buses:
            b.row(_balance_terms(b, case, s, bus.id, "flow", None), "=", bus.load, RowTag(3, s, None, f"b{bus.id}"))
        if not ignore_ramp:
            for u in units:
                j = idx[VariableRef("p", s, None, u.id)]
                b.row([(j, 1.0)], "<=", u.p_initial + u.ramp_interval, RowTag(4, s, None, f"g{u.id}_up"))
                b.row([(j, 1.0)], ">=", u.p_initial - u.ramp_interval, RowTag(4, s, None, f"g{u.id}_dn"))
        for w in case.renewable_units:
            b.row(
                [(idx[VariableRef("pIR", s, None, w.id)], 1.0), (idx[VariableRef("cIR", s, None, w.id)], 1.0)],
                "=", scen.forecast_max[w.id], RowTag(6, s, None, f"i{w.id}"),
            )
        for k in case.branches:
            sus = case.base_mva / k.reactance
            b.row(
                [
                    (idx[VariableRef("flow", s, None, k.id)], 1.0),
                    (idx[VariableRef("theta", s, None, k.from_bus)], -sus),
                    (idx[VariableRef("theta", s, None, k.to_bus)], sus),
                ],
                "=", 0.0, RowTag(9, s, None, f"k{k.id}"),
            )
        if not opts.enable_reserve:
            continue
        r_cols = [idx[VariableRef("r", s, None, u.id)] for u in units]
        for u, jr in zip(units, r_cols):
            jp = idx[VariableRef("p", s, None, u.id)]
            b.row([(jp, 1.0), (jr, 1.0)], "<=", u.p_max, RowTag(11, s, None, f"g{u.id}"))
        for u, jr in zip(units, r_cols):
            # sum_m r_m >= p_g + r_g; the r_g terms cancel and are not stored
            jp = idx[VariableRef("p", s, None, u.id)]
            terms = [(j, 1.0) for j in r_cols] + [(jp, -1.0), (jr, -1.0)]
            b.row(terms, ">=", 0.0, RowTag(12, s, None, f"g{u.id}"))
        for w in case.renewable_units:
            terms = [(j, 1.0) for j in r_cols] + [(idx[VariableRef("pIR", s, None, w.id)], -1.0)]
            b.row(terms, ">=", 0.0, RowTag(13, s, None, f"i{w.id}"))


def add_thermal_limit_rows(b: _Builder, case: PowerSystemCase) -> None:
    """Long-term limits, applied as flow column bounds (no rows are added)."""
    for s in range(len(case.scenario_set)):
        for k in case.branches:
            j = b.index[VariableRef("flow", s, None, k.id)]
            b.set_bounds(j, -k.limit_normal, k.limit_normal, "eq08")


def _contingency_columns(b: _Builder, case, opts, s: int, c: int, outage, switching: bool) -> None:
    for bus in case.buses:
        lo, hi, tag = _angle_bounds(case, opts, bus.id)
        b.col(VariableRef("theta_c", s, c, bus.id), lo, hi, tag)
    for k in case.branches:
        if k.id == outage:
            b.col(VariableRef("flow_c", s, c, k.id), 0.0, 0.0, "eq17")
        else:
            tag = "eq18" if switching and k.switchable else "eq15"
            b.col(VariableRef("flow_c", s, c, k.id), -k.limit_emergency, k.limit_emergency, tag)
    if switching:
        for k in case.branches:
            if k.id != outage and k.switchable:
                b.col(VariableRef("z", s, c, k.id), 0.0, 1.0, integer=True)


def _contingency_rows(b: _Builder, case, opts, s: int, c: int, outage, switching: bool) -> None:
    idx = b.index
    for bus in case.buses:
        b.row(_balance_terms(b, case, s, bus.id, "flow_c", c), "=", bus.load, RowTag(14, s, c, f"b{bus.id}"))
    n_switch = 0
    z_cols = []
    for k in case.branches:
        if k.id == outage:
            continue
        sus = case.base_mva / k.reactance
        jf = idx[VariableRef("flow_c", s, c, k.id)]
        flow_terms = [
            (jf, 1.0),
            (idx[VariableRef("theta_c", s, c, k.from_bus)], -sus),
            (idx[VariableRef("theta_c", s, c, k.to_bus)], sus),
        ]
        if not (switching and k.switchable):
            b.row(flow_terms, "=", 0.0, RowTag(16, s, c, f"k{k.id}"))
            continue
        jz = idx[VariableRef("z", s, c, k.id)]
        z_cols.append(jz)
        n_switch += 1
        lim = k.limit_emergency
        b.row([(jf, 1.0), (jz, -lim)], "<=", 0.0, RowTag(18, s, c, f"k{k.id}_up"))
        b.row([(jf, 1.0), (jz, lim)], ">=", 0.0, RowTag(18, s, c, f"k{k.id}_dn"))
        M = case.base_mva * big_m(k, opts)
        # flow - sus*dtheta + (1 - z) M >= 0  and  flow - sus*dtheta - (1 - z) M <= 0
        b.row(flow_terms + [(jz, -M)], ">=", -M, RowTag(19, s, c, f"k{k.id}"))
        b.row(flow_terms + [(jz, M)], "<=", M, RowTag(20, s, c, f"k{k.id}"))
    if switching and z_cols:
        # sum (1 - z) <= z_max
        b.row([(j, -1.0) for j in z_cols], "<=", case.z_max - n_switch, RowTag(21, s, c, "budget"))


def add_contingency_constraints(b: _Builder, case: PowerSystemCase, opts: BuildOptions | None = None) -> None:
    """Post-contingency copies of the network with fixed plain flow equations."""
    opts = opts or BuildOptions()
    _add_contingency_block(b, case, opts, switching=False)


def add_reconfiguration_constraints(b: _Builder, case: PowerSystemCase, opts: BuildOptions) -> None:
    """Post-contingency copies with switchable lines, big-M flow pairs and a switch budget."""
    if case.z_max < 0:
        raise ModelError("z_max must be >= 0")
    _add_contingency_block(b, case, opts, switching=True)


def _add_contingency_block(b: _Builder, case, opts, switching: bool) -> None:
    for outage in case.contingency_set:
        if outage not in case._branch_index:
            raise ModelError(f"contingency names unknown branch {outage!r}")
    for s in range(len(case.scenario_set)):
        for c, outage in enumerate(case.contingency_set):
            _contingency_columns(b, case, opts, s, c, outage, switching)
            _contingency_rows(b, case, opts, s, c, outage, switching)


def build_model(case: PowerSystemCase, kind: ModelKind | str, opts: BuildOptions | None = None) -> LinearProgram:
    """Build the linear (or mixed-binary) program for one model kind."""
    kind = ModelKind.parse(kind) if isinstance(kind, str) else kind
    opts = opts or BuildOptions()
    if kind.has_contingencies and len(case.contingency_set) == 0:
        raise ModelError(f"{kind.label} needs a non-empty contingency set")
    b = _Builder(case, kind)
    _base_columns(b, case, opts)
    add_base_constraints(b, case, opts)
    if kind.has_base_limits:
        add_thermal_limit_rows(b, case)
    if kind is ModelKind.E_SOPF:
        add_contingency_constraints(b, case, opts)
    elif kind is ModelKind.E_SOPF_NR:
        add_reconfiguration_constraints(b, case, opts)
    return b.finish()
