"""Command-line interface.

    structpop <command> --config PATH [--grid-cells N] [--out DIR] [--seed N]
                        [--format csv|json]

Commands: validate, equilibrium, stability, simulate, verify, sweep.  Every
command prints a JSON report on stdout.  With ``--out`` (or
``output.directory`` in the config) data files are written there too, and
wall-clock timings go to a separate ``timings.json`` so the other outputs
stay byte-identical between runs.

Exit codes: 0 success, 2 validation, 3 configuration, 4 no equilibrium,
5 route, 6 route inconsistency (or another untrustworthy numerical result),
7 stiffness, 8 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .config import RunConfig, get_path, load_config, parse_config, set_path
from .equilibrium import (
    polish_equilibrium,
    scan_table,
    solve_equilibrium,
    solve_equilibrium_general,
    solve_equilibrium_separable,
)
from .errors import (
    AssemblyError,
    ConfigurationError,
    FitError,
    InconsistencyError,
    ModelError,
    OscillationError,
    RouteError,
    StepSizeError,
    StiffnessError,
    StructPopError,
)
from .numerics import Rectangle, dense_eigen
from .rates import make_rate_surface, validate_rates
from .simulator import (
    measure_envelope_growth_rate,
    measure_growth_rate,
    perturb_equilibrium,
    simulate,
)
from .stability import assemble_linearized, spectral_verdict

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3
EXIT_NO_EQUILIBRIUM = 4
EXIT_ROUTE = 5
EXIT_INCONSISTENT = 6
EXIT_STIFF = 7
EXIT_VERIFY = 8

SWEEP_COLUMNS = ["param", "equilibria_count", "dominant_eig_re", "dominant_eig_im",
                 "verdict", "status", "P_star"]


# ------------------------------------------------------------------ output

def _plain(obj):
    """Recursively convert numpy scalars/arrays and complex numbers for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class Outputs:
    """Collects the files a command produces; writes them if a directory is set."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def flush(self):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.directory / name).write_text(text)


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"structpop": pkg, "numpy": np.__version__, "scipy": scipy.__version__}


def _header(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.hash(), "grid": cfg.grid().describe(),
            "seed": cfg.seed, "versions": _versions()}


def _p_range(cfg):
    pr = cfg["equilibrium"]["P_range"]
    return None if pr is None else (float(pr[0]), float(pr[1]))


def _region(cfg):
    r = cfg["stability"]["region"]
    return None if r is None else Rectangle(*map(float, r))


def _equilibria(cfg, rates, grid):
    return solve_equilibrium(rates, grid, cfg["equilibrium"]["route"], _p_range(cfg))


def _no_equilibrium_report(cfg, rates, grid, report):
    report["status"] = "no_equilibrium"
    report["scan_table"] = scan_table(rates, grid, cfg["equilibrium"]["route"], _p_range(cfg))
    return EXIT_NO_EQUILIBRIUM, report


def _verdict(cfg, rates, eq, grid, check_jacobian=None):
    st = cfg["stability"]
    tol = st["tolerances"]
    return spectral_verdict(
        rates, eq, grid, region=_region(cfg), tol_verdict=tol.get("verdict"),
        check_jacobian=st["check_jacobian"] if check_jacobian is None else check_jacobian,
        max_disagreement=float(tol.get("max_disagreement", 0.5)))


# ---------------------------------------------------------------- commands

def cmd_validate(cfg: RunConfig, out: Outputs, fmt: str = "csv") -> tuple[int, dict]:
    rates, grid = cfg.rates(), cfg.grid()
    rep = validate_rates(rates, grid, P_probe=(1.0, 0.5 * rates.P_max, rates.P_max), seed=cfg.seed)
    report = _header(cfg, "validate")
    report["validation"] = rep.to_dict()
    out.add("validation.json", dumps(report))
    return (EXIT_OK if rep.mandatory_ok else EXIT_VALIDATION), report


def cmd_equilibrium(cfg: RunConfig, out: Outputs, fmt: str = "csv") -> tuple[int, dict]:
    rates, grid = cfg.rates(), cfg.grid()
    report = _header(cfg, "equilibrium")
    eqs = _equilibria(cfg, rates, grid)
    if not eqs:
        code, report = _no_equilibrium_report(cfg, rates, grid, report)
        out.add("equilibrium.json", dumps(report))
        return code, report
    report["status"] = "ok"
    report["equilibria"] = [e.to_dict() for e in eqs]
    cols = ["P_star", "P_bar_star", "residual_stationary", "residual_total", "route"]
    rows = [[getattr(e, c) for c in cols] for e in eqs]
    if fmt == "json":
        out.add("equilibria.json", dumps(report["equilibria"]))
    else:
        out.add("equilibria.csv", csv_text(cols, rows))
    for k, e in enumerate(eqs):
        name = "profile.csv" if k == 0 else f"profile_{k + 1}.csv"
        out.add(name, csv_text(["s", "p_star"], zip(grid.midpoints, e.p_star)))
    out.add("equilibrium.json", dumps(report))
    return EXIT_OK, report


def cmd_stability(cfg: RunConfig, out: Outputs, fmt: str = "csv") -> tuple[int, dict]:
    rates, grid = cfg.rates(), cfg.grid()
    report = _header(cfg, "stability")
    eqs = _equilibria(cfg, rates, grid)
    if not eqs:
        code, report = _no_equilibrium_report(cfg, rates, grid, report)
        out.add("stability.json", dumps(report))
        return code, report
    reports = []
    for e in eqs:
        try:
            reports.append(_verdict(cfg, rates, e, grid).to_dict())
        except InconsistencyError as exc:
            report["status"] = "inconsistent"
            report["P_star"] = e.P_star
            report["error"] = str(exc)
            report["values"] = {"matrix": exc.values[0], "characteristic": exc.values[1]}
            out.add("stability.json", dumps(report))
            return EXIT_INCONSISTENT, report
    report["status"] = "ok"
    report["equilibria"] = reports
    out.add("stability.json", dumps(report))
    return EXIT_OK, report


def _initial_density(cfg, rates, grid):
    """Initial density and, for perturbation runs, the equilibrium it perturbs."""
    init = cfg["simulate"]["initial"]
    if init["kind"] == "profile":
        surf = make_rate_surface(init.get("family", ""), init.get("params", {}))
        p0 = np.asarray(surf.value(grid.midpoints, 0.0), float) * np.ones(grid.n_cells)
        return p0, None
    eqs = _equilibria(cfg, rates, grid)
    if not eqs:
        return None, None
    index = int(init.get("equilibrium", 0))
    if not 0 <= index < len(eqs):
        raise ConfigurationError(f"only {len(eqs)} equilibria; index {index} is out of range",
                                 field="simulate.initial.equilibrium")
    eq = polish_equilibrium(rates, grid, eqs[index])
    mode = init.get("mode", "uniform")
    vec = None
    if mode == "first_eigvec":
        _, vec = dense_eigen(assemble_linearized(rates, eq, grid, check_jacobian=False).matrix)
    p0 = perturb_equilibrium(eq, float(init.get("amplitude", 0.01)), mode, seed=cfg.seed,
                             eigvec=vec)
    return p0, eq


def _fit(trace, eq, window):
    """Measured growth rate: plain log-linear fit, or the envelope if it oscillates."""
    try:
        rate, rms = measure_growth_rate(trace, eq, window)
        return {"rate": rate, "rms": rms, "method": "log_linear"}
    except OscillationError:
        try:
            rate, rms = measure_envelope_growth_rate(trace, eq, window)
            return {"rate": rate, "rms": rms, "method": "envelope"}
        except FitError as exc:
            return {"rate": None, "rms": None, "method": "envelope", "error": str(exc)}
    except FitError as exc:
        return {"rate": None, "rms": None, "method": "log_linear", "error": str(exc)}


def _overall_rate(trace, eq):
    """log(|P(t_end) - P*| / |P(0) - P*|) / t_end: sign of net growth over the run."""
    d0 = abs(trace.totals[0] - eq.P_star)
    d1 = abs(trace.totals[-1] - eq.P_star)
    T = trace.times[-1]
    if T <= 0 or d0 == 0:
        return None
    return float(np.log(max(d1, 1e-300) / d0) / T)


def cmd_simulate(cfg: RunConfig, out: Outputs, fmt: str = "csv") -> tuple[int, dict]:
    rates, grid = cfg.rates(), cfg.grid()
    sim = cfg["simulate"]
    report = _header(cfg, "simulate")
    p0, eq = _initial_density(cfg, rates, grid)
    if p0 is None:
        code, report = _no_equilibrium_report(cfg, rates, grid, report)
        out.add("simulation.json", dumps(report))
        return code, report
    trace = simulate(p0, rates, grid, float(sim["t_end"]), cadence=sim["cadence"])
    report["status"] = "ok"
    report["summary"] = {
        "t_end": float(trace.times[-1]),
        "steps": int(trace.times.size - 1),
        "P_initial": float(trace.totals[0]),
        "P_final": float(trace.totals[-1]),
        "mass_balance_max": float(trace.mass_balance_residuals.max(initial=0.0)),
        "stopped_early": trace.stopped_early,
    }
    if eq is not None:
        report["summary"]["P_star"] = eq.P_star
        report["summary"]["fit_window"] = sim["fit_window"]
        report["summary"]["growth"] = _fit(trace, eq, tuple(sim["fit_window"]))
        report["summary"]["overall_rate"] = _overall_rate(trace, eq)
    out.add("trace.csv", csv_text(["time", "P"], zip(trace.times, trace.totals)))
    rows = ((t, s, v) for t, snap in zip(trace.snapshot_times, trace.snapshots)
            for s, v in zip(grid.midpoints, snap))
    out.add("snapshots.csv", csv_text(["time", "s", "density"], rows))
    out.add("simulation.json", dumps(report))
    return EXIT_OK, report


# ------------------------------------------------------------------ verify

def _check(table, name, n, value, tol, passed=None, note=""):
    if passed is None:
        passed = value is not None and abs(value) <= tol
    table.append({"check": name, "grid_cells": n, "value": value, "tolerance": tol,
                  "passed": bool(passed), "note": note})


def _verify_grid(cfg, rates, n, table, general_solver):
    """All checks on one grid; returns the general-route P* (or None)."""
    ver = cfg["verify"]
    grid = cfg.with_overrides(n_cells=n).grid()
    h = grid.h
    gen = general_solver(rates, grid, _p_range(cfg))
    if not gen:
        _check(table, "equilibrium_exists", n, None, None, passed=False,
               note="general route found no equilibrium")
        return None
    eq = gen[0]
    if rates.beta.separable:
        sep = solve_equilibrium_separable(rates, grid, _p_range(cfg))
        if len(sep) != len(gen):
            _check(table, "route_agreement", n, None, ver["route_agreement"], passed=False,
                   note=f"separable route found {len(sep)} equilibria, general {len(gen)}")
        for k, (a, b) in enumerate(zip(sep, gen)):
            _check(table, "route_agreement", n, a.P_star - b.P_star, ver["route_agreement"],
                   note=f"equilibrium {k}: separable {a.P_star!r}, general {b.P_star!r}")

    try:
        rep = _verdict(cfg, rates, eq, grid, check_jacobian="full")
    except InconsistencyError as exc:
        _check(table, "spectral_routes", n, None, None, passed=False, note=str(exc))
        return eq.P_star
    except AssemblyError as exc:
        _check(table, "jacobian_identity", n, None, ver["jacobian"], passed=False, note=str(exc))
        return eq.P_star
    _check(table, "jacobian_identity", n, rep.jacobian_error, ver["jacobian"])

    tol_g = ver["growth_rate"] if ver["growth_rate"] is not None else max(0.05, 10 * h)
    init = dict(cfg["simulate"]["initial"])
    if init["kind"] != "perturbation":
        init = {"kind": "perturbation", "mode": "uniform", "amplitude": 0.01}
    vec = rep.dominant_eigvec if init.get("mode") == "first_eigvec" else None
    p0 = perturb_equilibrium(eq, float(init.get("amplitude", 0.01)), init.get("mode", "uniform"),
                             seed=cfg.seed, eigvec=vec)
    # stop once the deviation is no longer small: the sign check concerns the
    # linearised dynamics, and runaway growth may not stay representable
    trace = simulate(p0, rates, grid, float(cfg["simulate"]["t_end"]),
                     stop_outside=(eq.P_star, 0.5 * eq.P_star))
    _check(table, "mass_balance", n, float(trace.mass_balance_residuals.max(initial=0.0)),
           ver["mass_balance"])

    dom = rep.dominant_matrix_eig
    overall = _overall_rate(trace, eq)
    if rep.verdict in ("stable", "unstable"):
        want = -1 if rep.verdict == "stable" else 1
        _check(table, "growth_sign", n, overall, None,
               passed=overall is not None and np.sign(overall) == want,
               note=f"verdict {rep.verdict}; net log-rate of |P - P*| over the run")
    else:
        _check(table, "growth_sign", n, overall, None, passed=True,
               note="verdict inconclusive; sign not compared")

    # the magnitude is compared only when both spectral routes confirm the
    # dominant mode (or there is only one route) and it is real
    confirmed = (not rates.beta.separable or (rep.rightmost_char_root is not None
                                               and abs(rep.rightmost_char_root - dom) <= tol_g))
    if rep.verdict == "stable" and confirmed and abs(dom.imag) <= 1e-8:
        fit = _fit(trace, eq, tuple(cfg["simulate"]["fit_window"]))
        err = None if fit["rate"] is None else fit["rate"] - dom.real
        _check(table, "growth_rate", n, err, tol_g,
               note=f"measured {fit['rate']!r} ({fit['method']}), dominant eigenvalue {dom.real!r}")
    else:
        why = ("no characteristic root confirms the matrix eigenvalue"
               if not confirmed else f"verdict {rep.verdict}, dominant eigenvalue {dom!r}")
        _check(table, "growth_rate", n, None, tol_g, passed=True,
               note=f"magnitude not compared: {why}")
    return eq.P_star


def cmd_verify(cfg: RunConfig, out: Outputs, fmt: str = "csv",
               general_solver=solve_equilibrium_general) -> tuple[int, dict]:
    """Equilibrium, stability and simulation on grids n and 2n, cross-checked."""
    rates = cfg.rates()
    n = int(cfg["grid"]["n_cells"])
    table: list[dict] = []
    P = [_verify_grid(cfg, rates, k, table, general_solver) for k in (n, 2 * n)]
    if None not in P:
        _check(table, "grid_agreement", 2 * n, P[1] - P[0], cfg["verify"]["grid_agreement"],
               note=f"general route P* on {n} and {2 * n} cells")
    failures = [row for row in table if not row["passed"]]
    report = _header(cfg, "verify")
    report["table"] = table
    report["failures"] = failures
    report["status"] = "ok" if not failures else "failed"
    cols = ["check", "grid_cells", "value", "tolerance", "passed", "note"]
    out.add("verify.csv", csv_text(cols, ([r[c] for c in cols] for r in table)))
    out.add("verify.json", dumps(report))
    return (EXIT_OK if not failures else EXIT_VERIFY), report


# ------------------------------------------------------------------- sweep

def _sweep_one(cfg, param, value):
    try:
        sub = parse_config(set_path(cfg.data, param, value))
        rates, grid = sub.rates(), sub.grid()
        eqs = _equilibria(sub, rates, grid)
        if not eqs:
            return [value, 0, None, None, "", "no_equilibrium", None]
        rep = _verdict(sub, rates, eqs[0], grid)
        dom = rep.dominant_matrix_eig
        return [value, len(eqs), dom.real, dom.imag, rep.verdict, "ok", eqs[0].P_star]
    except StructPopError as exc:
        return [value, None, None, None, "", f"error: {type(exc).__name__}: {exc}", None]


def cmd_sweep(cfg: RunConfig, out: Outputs, fmt: str = "csv", param: str = "",
              values=()) -> tuple[int, dict]:
    """One row per value of ``param`` (a dotted config path), computed concurrently."""
    get_path(cfg.data, param)
    set_path(cfg.data, param, 0.0)  # numeric-field check before fanning out
    values = [float(v) for v in values]
    if values:
        with ThreadPoolExecutor(max_workers=min(4, len(values))) as pool:
            rows = list(pool.map(lambda v: _sweep_one(cfg, param, v), values))
    else:
        rows = []
    report = _header(cfg, "sweep")
    report["parameter"] = param
    report["rows"] = [dict(zip(SWEEP_COLUMNS, r)) for r in rows]
    if fmt == "json":
        out.add("sweep.json", dumps(report["rows"]))
    else:
        out.add("sweep.csv", csv_text(SWEEP_COLUMNS, rows))
    return EXIT_OK, report


# -------------------------------------------------------------------- main

COMMANDS = {
    "validate": cmd_validate,
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structpop",
        description="Equilibria, stability and simulation of a size-structured population.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--grid-cells", type=int, metavar="N", help="override grid.n_cells")
        p.add_argument("--out", metavar="DIR", help="directory for data files and reports")
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="format of tabular data files (default csv)")
        if name == "sweep":
            p.add_argument("--param", required=True,
                           help="dotted path of a numeric config field, "
                                "e.g. model.beta.beta1.params.a")
            p.add_argument("--values", default="",
                           help="comma-separated values (empty for none)")
    return parser


def _error(code, message, out=None, **extra):
    report = {"status": "error", "exit_code": code, "error": message, **extra}
    print(dumps(report), end="")
    print(message, file=sys.stderr)
    if out is not None:
        out.add("error.json", dumps(report))
        out.flush()
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Outputs(args.out)
    try:
        cfg = load_config(args.config)
        if args.grid_cells is not None and args.grid_cells < 8:
            raise ConfigurationError("--grid-cells must be >= 8", field="grid.n_cells")
        cfg = cfg.with_overrides(n_cells=args.grid_cells, seed=args.seed)
    except ConfigurationError as exc:
        return _error(EXIT_CONFIG, str(exc), out, field=exc.field)
    except ModelError as exc:
        return _error(EXIT_VALIDATION, str(exc), out)
    if out.directory is None and cfg["output"]["directory"]:
        out = Outputs(cfg["output"]["directory"])

    kwargs = {}
    if args.command == "sweep":
        kwargs = {"param": args.param,
                  "values": [v for v in args.values.split(",") if v.strip()]}
    t0 = time.perf_counter()
    try:
        if args.command == "sweep":
            try:
                kwargs["values"] = [float(v) for v in kwargs["values"]]
            except ValueError:
                raise ConfigurationError(f"--values must be numbers, got {args.values!r}",
                                         field="values") from None
        code, report = COMMANDS[args.command](cfg, out, args.format, **kwargs)
    except ConfigurationError as exc:
        return _error(EXIT_CONFIG, str(exc), out, field=exc.field)
    except ModelError as exc:
        return _error(EXIT_VALIDATION, str(exc), out, config_hash=cfg.hash())
    except RouteError as exc:
        return _error(EXIT_ROUTE, str(exc), out, config_hash=cfg.hash())
    except InconsistencyError as exc:
        return _error(EXIT_INCONSISTENT, str(exc), out, config_hash=cfg.hash(),
                      values=list(exc.values or ()))
    except (StiffnessError, StepSizeError) as exc:
        return _error(EXIT_STIFF, str(exc), out, config_hash=cfg.hash())
    except StructPopError as exc:
        # remaining numerical failures (assembly mismatch, spectral anomaly,
        # non-convergence) mean the computed results cannot be trusted
        return _error(EXIT_INCONSISTENT, f"{type(exc).__name__}: {exc}", out,
                      config_hash=cfg.hash())
    elapsed = time.perf_counter() - t0
    print(dumps(report), end="")
    if code == EXIT_VERIFY:
        for row in report["failures"]:
            print(f"FAILED {row['check']} (n={row['grid_cells']}): value={row['value']!r} "
                  f"tolerance={row['tolerance']!r} {row['note']}", file=sys.stderr)
    out.add("timings.json", dumps({"command": args.command, "seconds": elapsed}))
    out.flush()
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
