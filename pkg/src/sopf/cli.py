"""Command-line entry point: ``sopf solve | compare | export-mps | verify``.

Every flag may also be set in a JSON config file (``--config``), keyed by the
flag name with or without dashes (``"z-max"`` or ``"z_max"``); the command
line wins. ``SOPF_OUT_DIR`` sets the default output directory.

Exit codes: 0 clean, 1 verification violations, 2 usage or config error,
3 I/O error, 4 case parse or validation error, 5 a solve did not reach
optimality, 6 relaxation-chain ordering failed (``compare`` only).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import cases
from .dispatch import DispatchResult, decode_dispatch
from .economics import congestion_costs, emit_reports, lmp_csv
from .engine import ModelRun, relaxation_chain_ok, run_model
from .formulation import BuildOptions, ModelError, ModelKind, build_model
from .network import CaseError, PowerSystemCase, load_case_file, load_scenarios
from .solver import SolveOptions, SolverError, Status, export_mps, import_solution
from .verifier import ViolationReport, check_dispatch

log = logging.getLogger("sopf")

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CASE = 4
EXIT_SOLVE = 5
EXIT_ORDERING = 6

OUT_DIR_ENV = "SOPF_OUT_DIR"

BUILTIN_CASES = {
    "two-bus": cases.two_bus,
    "triangle": cases.triangle,
    "four-bus": cases.four_bus_switching,
    "rts96": cases.rts96,
    "rts96-reduced": cases.rts96_reduced,
}

# flag name -> (default, type, help)
_OPTION_FLAGS = {
    "case": (None, str, "case JSON file, or builtin:NAME (" + ", ".join(BUILTIN_CASES) + ")"),
    "scenarios": (None, str, "scenario overlay JSON replacing the case scenarios"),
    "model": (None, str, "model kind r|n|e|enr; repeat or comma-separate for several"),
    "z-max": (None, int, "switch budget per (scenario, contingency)"),
    "angle-bound": (math.pi, float, "bus angle bound in radians"),
    "big-m": ("tight", str, "'tight' or a positive per-unit value"),
    "no-reserve": (False, bool, "drop the reserve rows"),
    "ignore-ramp": (False, bool, "drop the interval ramp rows"),
    "mip-gap": (1e-6, float, "relative MILP gap"),
    "time-limit": (None, float, "MILP time limit in seconds"),
    "node-limit": (None, int, "MILP node limit"),
    "iteration-limit": (None, int, "LP iteration limit"),
    "feasibility-tol": (1e-7, float, "primal feasibility tolerance"),
    "optimality-tol": (1e-7, float, "dual feasibility tolerance"),
    "integrality-tol": (1e-6, float, "binary integrality tolerance"),
    "method": ("auto", str, "LP engine: auto|simplex|highs"),
    "milp-method": ("bnb", str, "MILP engine: bnb|highs"),
    "out-dir": (None, str, f"output directory (default ${OUT_DIR_ENV} or ./sopf-out)"),
    "format": ("csv", str, "report format: csv|text"),
    "tol": (1e-6, float, "verifier tolerance in per unit"),
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    case: PowerSystemCase
    models: list[ModelKind]
    build: BuildOptions
    solve: SolveOptions
    out_dir: Path
    fmt: str
    tol: float


# ---------------------------------------------------------------- parsing


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with flag values")
    for name, (_, typ, help_) in _OPTION_FLAGS.items():
        dest = name.replace("-", "_")
        if typ is bool:
            p.add_argument(f"--{name}", dest=dest, action="store_true", default=None, help=help_)
        elif name == "model":
            p.add_argument(f"--{name}", dest=dest, action="append", default=None, help=help_)
        else:
            p.add_argument(f"--{name}", dest=dest, type=typ, default=None, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sopf", description="Stochastic DC optimal power flow with corrective switching.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one or more models and write dispatch, prices and checks")
    _add_shared(p)
    p = sub.add_parser("compare", help="solve all four models and write the cost and market tables")
    _add_shared(p)
    p = sub.add_parser("export-mps", help="write one MPS file per model")
    _add_shared(p)
    p = sub.add_parser("verify", help="check a dispatch JSON or a 'name value' solution file")
    _add_shared(p)
    p.add_argument("--solution", required=True, help="dispatch JSON from 'solve' or an external solution file")
    return parser


def _merge_config(ns: argparse.Namespace) -> dict:
    """Flag values with command line over config file over defaults."""
    cfg = {}
    if ns.config:
        try:
            raw = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_IO) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config is not valid JSON: {exc}", EXIT_USAGE) from None
        if not isinstance(raw, dict):
            raise CliError("config must be a JSON object", EXIT_USAGE)
        for k, v in raw.items():
            key = k.replace("_", "-")
            if key not in _OPTION_FLAGS:
                raise CliError(f"unknown config key {k!r}", EXIT_USAGE)
            cfg[key] = v
    out = {}
    for name, (default, _, _) in _OPTION_FLAGS.items():
        cli_val = getattr(ns, name.replace("-", "_"))
        out[name] = cli_val if cli_val is not None else cfg.get(name, default)
    return out


def _parse_models(value, default_all: bool) -> list[ModelKind]:
    if value is None:
        if default_all:
            return list(ModelKind)
        raise CliError("select at least one model with --model", EXIT_USAGE)
    items = value if isinstance(value, list) else [value]
    kinds = []
    for item in items:
        for tok in str(item).split(","):
            if tok.strip():
                try:
                    kind = ModelKind.parse(tok)
                except ValueError as exc:
                    raise CliError(str(exc), EXIT_USAGE) from None
                if kind not in kinds:
                    kinds.append(kind)
    if not kinds:
        raise CliError("select at least one model with --model", EXIT_USAGE)
    return kinds


def _load_case(path: str | None, scenarios: str | None) -> PowerSystemCase:
    if path is None:
        raise CliError("--case is required", EXIT_USAGE)
    try:
        if path.startswith("builtin:"):
            name = path.split(":", 1)[1]
            if name not in BUILTIN_CASES:
                raise CliError(f"unknown builtin case {name!r}", EXIT_USAGE)
            case = BUILTIN_CASES[name]()
            if scenarios is not None:
                case = case.with_updates(scenario_set=load_scenarios(Path(scenarios).read_text(), case))
            return case
        return load_case_file(path, scenarios)
    except OSError as exc:
        raise CliError(f"cannot read case: {exc}", EXIT_IO) from None
    except CaseError as exc:
        raise CliError(f"invalid case: {exc}", EXIT_CASE) from None


def make_config(ns: argparse.Namespace) -> RunConfig:
    vals = _merge_config(ns)
    models = _parse_models(vals["model"], default_all=ns.command in ("compare", "export-mps"))
    if ns.command == "compare":
        models = list(ModelKind)
    case = _load_case(vals["case"], vals["scenarios"])
    if vals["z-max"] is not None:
        if int(vals["z-max"]) < 0:
            raise CliError("--z-max must be >= 0", EXIT_USAGE)
        case = case.with_updates(z_max=int(vals["z-max"]))
    big_m = vals["big-m"]
    try:
        if big_m != "tight":
            big_m = float(big_m)
        build = BuildOptions(
            angle_bound=float(vals["angle-bound"]),
            big_m_mode=big_m,
            enable_reserve=not vals["no-reserve"],
            ignore_ramp=bool(vals["ignore-ramp"]),
        )
        solve = SolveOptions(
            feasibility_tol=float(vals["feasibility-tol"]),
            optimality_tol=float(vals["optimality-tol"]),
            mip_gap=float(vals["mip-gap"]),
            integrality_tol=float(vals["integrality-tol"]),
            node_limit=vals["node-limit"],
            time_limit=vals["time-limit"],
            iteration_limit=vals["iteration-limit"],
            method=vals["method"],
            milp_method=vals["milp-method"],
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad option: {exc}", EXIT_USAGE) from None
    if vals["format"] not in ("csv", "text"):
        raise CliError("--format must be csv or text", EXIT_USAGE)
    out_dir = Path(vals["out-dir"] or os.environ.get(OUT_DIR_ENV) or "sopf-out")
    return RunConfig(case, models, build, solve, out_dir, vals["format"], float(vals["tol"]))


# ---------------------------------------------------------------- output


def _write(path: Path, text: str) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _sidecar(cfg: RunConfig, lines: list[str]) -> None:
    """Timings and timestamps live here so the report files stay reproducible."""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(cfg.out_dir / "run.log", "a") as fh:
        for line in lines:
            fh.write(f"{stamp} {line}\n")


def _switching_csv(case: PowerSystemCase, dispatch: DispatchResult) -> str:
    rows = ["scenario,contingency,outage,opened_branch"]
    for s, c, k in dispatch.openings():
        rows.append(f"{s},{c},{case.contingency_set.outages[c]},{k}")
    return "\n".join(rows) + "\n"


def _model_stem(kind: ModelKind) -> str:
    return kind.label


def _run_and_write(cfg: RunConfig, kind: ModelKind) -> tuple[ModelRun, int]:
    try:
        run = run_model(cfg.case, kind, cfg.build, cfg.solve, verify=False)
    except (ModelError, SolverError) as exc:
        print(f"{kind.label}: {exc}", file=sys.stderr)
        return None, EXIT_SOLVE
    stem = _model_stem(kind)
    if run.status is not Status.OPTIMAL or run.dispatch is None:
        print(f"{kind.label}: {run.status.value}", file=sys.stderr)
        code = EXIT_SOLVE
        if run.dispatch is None:
            return run, code
    else:
        code = EXIT_OK
    run.violations = check_dispatch(cfg.case, run.dispatch, kind, cfg.build, tol=cfg.tol)
    _write(cfg.out_dir / f"{stem}_dispatch.json", run.dispatch.to_json() + "\n")
    _write(cfg.out_dir / f"{stem}_lmp.csv", lmp_csv({kind: run.lmps}))
    _write(cfg.out_dir / f"{stem}_violations.csv", run.violations.to_csv())
    if kind is ModelKind.E_SOPF_NR:
        _write(cfg.out_dir / f"{stem}_switching.csv", _switching_csv(cfg.case, run.dispatch))
    if code == EXIT_OK and not run.violations.clean:
        code = EXIT_VIOLATIONS
    return run, code


def _worst(codes: list[int]) -> int:
    """Solve failures outrank violations; otherwise the largest code."""
    if EXIT_SOLVE in codes:
        return EXIT_SOLVE
    return max(codes, default=EXIT_OK)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig) -> int:
    codes, log_lines = [], []
    for kind in cfg.models:
        run, code = _run_and_write(cfg, kind)
        codes.append(code)
        if run is None:
            continue
        log_lines.append(f"{kind.label} status={run.status.value} elapsed={run.elapsed:.3f}s")
        if run.dispatch is None:
            continue
        print(f"{kind.label}: {run.status.value}, objective {run.objective:.6f}, "
              f"avg LMP {run.lmps.avg:.4f}, violations {len(run.violations)}")
        if kind is ModelKind.E_SOPF_NR:
            for s, c, k in run.dispatch.openings():
                print(f"  scenario {s}, outage {cfg.case.contingency_set.outages[c]}: open branch {k}")
    _sidecar(cfg, log_lines)
    return _worst(codes)


def cmd_compare(cfg: RunConfig) -> int:
    runs, codes, log_lines = {}, [], []
    for kind in cfg.models:
        run, code = _run_and_write(cfg, kind)
        codes.append(code)
        if run is not None:
            log_lines.append(f"{kind.label} status={run.status.value} elapsed={run.elapsed:.3f}s")
            if run.dispatch is not None and run.status is Status.OPTIMAL:
                runs[kind] = run
    tc = {k: r.objective for k, r in runs.items()}
    costs = None
    if ModelKind.R_SOPF in tc and ModelKind.N_SOPF in tc:
        costs = congestion_costs(tc)
    markets = {k: (r.lmps, r.settlement) for k, r in runs.items()}
    reports = emit_reports(costs, markets, cfg.fmt)
    ext = "csv" if cfg.fmt == "csv" else "txt"
    for name, text in reports.items():
        _write(cfg.out_dir / (f"{name}.csv" if name == "lmp" else f"{name}.{ext}"), text)
        if name != "lmp":
            print(text)
    chain = relaxation_chain_ok(tc)
    for label, ok in chain.items():
        print(f"{'PASS' if ok else 'FAIL'} {label}")
    _sidecar(cfg, log_lines)
    code = _worst(codes)
    if code == EXIT_OK and not all(chain.values()):
        code = EXIT_ORDERING
    return code


def cmd_export(cfg: RunConfig) -> int:
    for kind in cfg.models:
        try:
            lp = build_model(cfg.case, kind, cfg.build)
        except ModelError as exc:
            print(f"{kind.label}: {exc}", file=sys.stderr)
            return EXIT_CASE
        path = cfg.out_dir / f"{_model_stem(kind)}.mps"
        _write(path, export_mps(lp, _model_stem(kind)))
        print(f"wrote {path} ({lp.n_rows} rows, {lp.n_cols} columns, {len(lp.binary_columns)} binaries)")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, solution_path: str) -> int:
    if len(cfg.models) != 1:
        raise CliError("verify takes exactly one --model", EXIT_USAGE)
    kind = cfg.models[0]
    try:
        text = Path(solution_path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read solution: {exc}", EXIT_IO) from None
    report: ViolationReport
    try:
        dispatch = _read_solution(cfg, kind, text)
        report = check_dispatch(cfg.case, dispatch, kind, cfg.build, tol=cfg.tol)
    except (SolverError, ValueError, KeyError, IndexError) as exc:
        # unreadable or incomplete solutions are reported, not raised
        print(f"solution rejected: {exc}", file=sys.stderr)
        report = None
    if report is None:
        csv_text = "tag,scenario,contingency,element,residual,tolerance\nunreadable,,,,,\n"
        code = EXIT_VIOLATIONS
    else:
        csv_text = report.to_csv()
        code = report.exit_status
        print(f"{kind.label}: objective {dispatch.objective:.6f}, violations {len(report)}")
    _write(cfg.out_dir / f"{_model_stem(kind)}_verify.csv", csv_text)
    sys.stdout.write(csv_text)
    return code


def _read_solution(cfg: RunConfig, kind: ModelKind, text: str) -> DispatchResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict):
        dispatch = DispatchResult.from_dict(doc)
        if dispatch.kind is not kind:
            raise ValueError(f"solution is for {dispatch.kind.label}, not {kind.label}")
        return dispatch
    lp = build_model(cfg.case, kind, cfg.build)
    return decode_dispatch(cfg.case, import_solution(text, lp))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(ns)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if ns.command == "solve":
            return cmd_solve(cfg)
        if ns.command == "compare":
            return cmd_compare(cfg)
        if ns.command == "export-mps":
            return cmd_export(cfg)
        return cmd_verify(cfg, ns.solution)
    except CliError as exc:
        print(f"sopf: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"sopf: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
