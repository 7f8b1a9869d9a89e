"""MPS export and plain-text solution import.

The writer emits the classic section layout (NAME, ROWS, COLUMNS, RHS,
RANGES, BOUNDS, ENDATA) with whitespace-separated fields. Names are the
provenance tags, which exceed the 8-character fixed-column limit, so readers
must accept free-format spacing (HiGHS, CPLEX, Gurobi and GLPK all do).
Numbers are written with ``repr`` so a re-read program is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..formulation import LinearProgram
from .lp import LpSolution, SolverError, Status
from .milp import MilpSolution

__all__ = ["MpsData", "export_mps", "export_solution", "import_solution", "read_mps", "unique_names"]

OBJ_ROW = "COST"


def unique_names(names: list[str], reserved: set[str] = frozenset()) -> list[str]:
    """Make names unique by appending ``__2``, ``__3`` ... in order of appearance."""
    seen = set(reserved)
    out = []
    for name in names:
        cand, k = name, 1
        while cand in seen:
            k += 1
            cand = f"{name}__{k}"
        seen.add(cand)
        out.append(cand)
    return out


def _num(v: float) -> str:
    return repr(float(v))


def export_mps(lp: LinearProgram, name: str | None = None) -> str:
    name = name or (lp.kind.name if lp.kind is not None else "LP")
    rows = unique_names(lp.row_names, {OBJ_ROW})
    cols = unique_names(lp.col_names)
    out = [f"NAME          {name}", "ROWS", f" N  {OBJ_ROW}"]
    code = {"=": "E", "<=": "L", ">=": "G"}
    for rname, s in zip(rows, lp.sense):
        out.append(f" {code[str(s)]}  {rname}")

    out.append("COLUMNS")
    A = lp.A.tocsc()
    for j, cname in enumerate(cols):
        entries = []
        if lp.obj[j] != 0.0:
            entries.append((OBJ_ROW, lp.obj[j]))
        sl = slice(A.indptr[j], A.indptr[j + 1])
        entries.extend((rows[i], v) for i, v in zip(A.indices[sl], A.data[sl]))
        if not entries:
            entries.append((OBJ_ROW, 0.0))
        for rname, v in entries:
            out.append(f"    {cname}  {rname}  {_num(v)}")

    out.append("RHS")
    for rname, v in zip(rows, lp.rhs):
        if v != 0.0:
            out.append(f"    RHS  {rname}  {_num(v)}")
    out.append("RANGES")

    out.append("BOUNDS")
    for j, cname in enumerate(cols):
        lo, hi = lp.lb[j], lp.ub[j]
        if lp.integer[j] and lo == 0.0 and hi == 1.0:
            out.append(f" BV BND  {cname}")
            continue
        if lo == hi:
            out.append(f" FX BND  {cname}  {_num(lo)}")
            continue
        if lo == -math.inf and hi == math.inf:
            out.append(f" FR BND  {cname}")
            continue
        if lo == -math.inf:
            out.append(f" MI BND  {cname}")
        elif lo != 0.0:
            out.append(f" LO BND  {cname}  {_num(lo)}")
        if hi != math.inf:
            out.append(f" UP BND  {cname}  {_num(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


@dataclass
class MpsData:
    name: str
    row_names: list[str]
    col_names: list[str]
    obj: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray


def read_mps(text: str) -> MpsData:
    """Minimal free-format reader for files produced by :func:`export_mps`."""
    section = None
    name = ""
    row_names: list[str] = []
    senses: list[str] = []
    row_pos: dict[str, int] = {}
    obj_row = None
    col_pos: dict[str, int] = {}
    col_names: list[str] = []
    obj: dict[int, float] = {}
    entries: list[tuple[int, int, float]] = []
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, str, float | None]] = []
    inv = {"E": "=", "L": "<=", "G": ">="}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("*"):
            continue
        if not line[0].isspace():
            parts = line.split()
            section = parts[0]
            if section == "NAME":
                name = parts[1] if len(parts) > 1 else ""
            elif section == "ENDATA":
                break
            continue
        f = line.split()
        if section == "ROWS":
            if f[0] == "N":
                obj_row = f[1]
            else:
                row_pos[f[1]] = len(row_names)
                row_names.append(f[1])
                senses.append(inv[f[0]])
        elif section == "COLUMNS":
            cname = f[0]
            if cname not in col_pos:
                col_pos[cname] = len(col_names)
                col_names.append(cname)
            j = col_pos[cname]
            for rname, val in zip(f[1::2], f[2::2]):
                if rname == obj_row:
                    obj[j] = obj.get(j, 0.0) + float(val)
                elif rname in row_pos:
                    entries.append((row_pos[rname], j, float(val)))
                else:
                    raise SolverError(f"line {lineno}: unknown row {rname!r}")
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                rhs[row_pos[rname]] = float(val)
        elif section == "BOUNDS":
            bounds.append((f[0], f[2], float(f[3]) if len(f) > 3 else None))
        elif section == "RANGES":
            raise SolverError("ranged rows are not supported")
    m, n = len(row_names), len(col_names)
    lb, ub = np.zeros(n), np.full(n, math.inf)
    integer = np.zeros(n, dtype=bool)
    for kind, cname, val in bounds:
        j = col_pos[cname]
        if kind == "UP":
            ub[j] = val
        elif kind == "LO":
            lb[j] = val
        elif kind == "FX":
            lb[j] = ub[j] = val
        elif kind == "FR":
            lb[j], ub[j] = -math.inf, math.inf
        elif kind == "MI":
            lb[j] = -math.inf
        elif kind == "BV":
            lb[j], ub[j], integer[j] = 0.0, 1.0, True
        else:
            raise SolverError(f"unsupported bound type {kind}")
    r, c, v = zip(*entries) if entries else ((), (), ())
    A = sp.csr_matrix((v, (r, c)), shape=(m, n))
    return MpsData(
        name, row_names, col_names,
        np.array([obj.get(j, 0.0) for j in range(n)]),
        A, np.array(senses, dtype="<U2"), np.array([rhs.get(i, 0.0) for i in range(m)]),
        lb, ub, integer,
    )


def export_solution(sol: LpSolution | MilpSolution) -> str:
    """Write primal values as ``name value`` lines (the import format)."""
    inc = sol.incumbent if isinstance(sol, MilpSolution) else sol
    lines = [f"# objective {_num(inc.objective)}"]
    names = unique_names(inc.lp.col_names)
    lines += [f"{n} {_num(v)}" for n, v in zip(names, inc.x)]
    return "\n".join(lines) + "\n"


def import_solution(text: str, lp: LinearProgram) -> LpSolution | MilpSolution:
    """Bind ``name value`` pairs to the columns of ``lp``.

    Unlisted continuous columns default to 0; every binary must be listed.
    Returns a :class:`MilpSolution` when ``lp`` has binary columns.
    """
    names = unique_names(lp.col_names)
    pos = {n: j for j, n in enumerate(names)}
    x = np.zeros(lp.n_cols)
    seen = np.zeros(lp.n_cols, dtype=bool)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolverError(f"line {lineno}: expected 'name value', got {raw!r}")
        name, val = parts
        if name not in pos:
            raise SolverError(f"line {lineno}: unknown variable {name!r}")
        try:
            x[pos[name]] = float(val)
        except ValueError:
            raise SolverError(f"line {lineno}: bad value {val!r} for {name}") from None
        seen[pos[name]] = True
    bins = lp.binary_columns
    missing = bins[~seen[bins]]
    if missing.size:
        raise SolverError(f"solution misses binaries: {[names[j] for j in missing[:5]]}")
    nan_m = np.full(lp.n_rows, np.nan)
    nan_n = np.full(lp.n_cols, np.nan)
    sol = LpSolution(Status.IMPORTED, float(lp.obj @ x), x, nan_m, nan_n, lp, method="import")
    if bins.size == 0:
        return sol
    binaries = {lp.columns[j]: int(round(x[j])) for j in bins}
    return MilpSolution(Status.IMPORTED, sol, binaries, math.nan, math.nan, 0, method="import", lp=lp)
