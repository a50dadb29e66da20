"""Command line driver: ``radialbounds analyze|sweep|simulate SCENARIO``.

Exit codes: 0 success, 2 report emitted but a hypothesis (or a Monte Carlo
check) failed, 1 hard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bounds import EstimateReport, analyze
from .errors import ParseError, RadialBoundsError
from .isoperimetric import build_ratio_table
from .jacobi import solve_sigma
from .montecarlo import simulate_exit_time, write_paths_csv
from .scenario import Scenario, apply_parameter, load_scenario, load_schema, parse_value, scenario_from_dict

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED = 0, 1, 2
MC_ABS_TOL = 0.005

SWEEP_COLUMNS = ("value", "lambda_lower", "lambda_branch_integral", "lambda_branch_inf", "A", "inf_I",
                 "analytic_floor", "discrete_spectrum", "stochastically_incomplete_model",
                 "mean_exit_time_upper", "integral_status", "conditional")


@dataclass
class Report:
    """Serialized result of one command; ``to_dict``/``from_dict`` are inverse."""

    command: str
    input: dict
    estimate: dict | None = None
    mc: list | None = None
    tables: dict | None = None
    timings: dict | None = None
    tool: dict = field(default_factory=lambda: {"name": "radialbounds", "version": __version__})

    def to_dict(self) -> dict:
        out = {"tool": self.tool, "command": self.command, "input": self.input}
        for key in ("estimate", "mc", "tables", "timings"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls(**data)

    def estimate_report(self) -> EstimateReport:
        return EstimateReport.from_dict(self.estimate)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def _overrides(sc: Scenario, tol=None, r_cap=None, seed=None, fmt=None) -> Scenario:
    if tol is not None:
        sc.analysis["tol"] = tol
    if r_cap is not None:
        sc.analysis["r_cap"] = r_cap
    if seed is not None:
        sc.mc["seed"] = seed
    if fmt is not None:
        sc.output["format"] = fmt
    return sc


def _analyze_scenario(sc: Scenario, timings: dict | None = None):
    a = sc.analysis
    t0 = time.perf_counter()
    report, table = analyze(sc.profile, tol=a["tol"], r_cap=a["r_cap"], n_grid=a["grid_points"],
                            tail_tol=a["tail_tol"], proper=bool(sc.assumptions["proper"]),
                            minimal=sc.assumptions["minimal"], return_table=True)
    if timings is not None:
        timings["analyze_s"] = time.perf_counter() - t0
    return report, table


def _exit_code(est: EstimateReport) -> int:
    if est.conditional or est.discrete_spectrum == "hypotheses-violated":
        return EXIT_VIOLATED
    return EXIT_OK


def run_analyze(scenario_path, *, tol=None, r_cap=None, fmt=None, out=None, timings=True):
    """Full pipeline for one scenario; returns ``(Report, exit_code)``."""
    start = time.perf_counter()
    sc = _overrides(load_scenario(scenario_path), tol=tol, r_cap=r_cap, fmt=fmt)
    tdict: dict = {}
    est, table = _analyze_scenario(sc, tdict)
    tables = None
    if sc.output["dump_tables"]:
        stem = Path(out).with_suffix("") if out else Path(scenario_path).with_suffix("")
        ratio_path, sigma_path = f"{stem}.ratio.csv", f"{stem}.sigma.csv"
        table.to_csv(ratio_path)
        table.w.to_csv(sigma_path)
        tables = {"ratio_table": str(ratio_path), "warping_function": str(sigma_path)}
    tdict["total_s"] = time.perf_counter() - start
    rep = Report(command="analyze", input=sc.echo(), estimate=est.to_dict(), tables=tables,
                 timings=tdict if timings else None)
    return rep, _exit_code(est)


def _sweep_row(args):
    raw, base, name, value = args
    sc = scenario_from_dict(apply_parameter(raw, name, value), Path(base))
    est, _ = _analyze_scenario(sc)
    return _row(value, est)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def _row(value, est: EstimateReport) -> dict:
    status = est.integral_inv_I["kind"]
    exit_col = est.mean_exit_time_upper if est.mean_exit_time_upper is not None else status
    return {
        "value": value,
        "lambda_lower": est.lambda_lower,
        "lambda_branch_integral": est.lambda_branch_integral if est.lambda_branch_integral is not None else status,
        "lambda_branch_inf": est.lambda_branch_inf,
        "A": est.A,
        "inf_I": est.inf_I["bound_value"],
        "analytic_floor": est.analytic_floor,
        "discrete_spectrum": est.discrete_spectrum,
        "stochastically_incomplete_model": est.stochastically_incomplete_model,
        "mean_exit_time_upper": exit_col,
        "integral_status": status,
        "conditional": est.conditional,
    }


def run_sweep(scenario_path, param: str, values, *, workers: int | None = None, tol=None, r_cap=None):
    """One pipeline run per value, in input order; returns ``(rows, exit_code)``."""
    sc = _overrides(load_scenario(scenario_path), tol=tol, r_cap=r_cap)
    raw = sc.raw
    raw["analysis"] = dict(sc.analysis)
    vals = [parse_value(v) if isinstance(v, str) else v for v in values]
    for v in vals:  # fail fast on bad names or values before spawning workers
        scenario_from_dict(apply_parameter(raw, param, v), sc.base_dir)
    jobs = [(raw, str(sc.base_dir), param, v) for v in vals]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    code = EXIT_VIOLATED if any(r["conditional"] or r["discrete_spectrum"] == "hypotheses-violated"
                                for r in rows) else EXIT_OK
    for r in rows:
        r[param] = r.pop("value")
    return rows, code


def sweep_csv(rows, param: str) -> str:
    buf = io.StringIO()
    cols = (param,) + SWEEP_COLUMNS[1:]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def run_simulate(scenario_path, *, seed=None, out=None, timings=True, paths_csv=None):
    """Monte Carlo exit times for every radius in ``mc.R_list``; returns ``(Report, exit_code)``.

    Each mean is compared with ``F(R) - F(rho0)`` at ``max(3 stderr, 0.005)``.
    When the improper integral of ``I^{-1}`` converges, each mean must also stay
    below ``F(inf) + 3 stderr``.
    """
    start = time.perf_counter()
    sc = _overrides(load_scenario(scenario_path), seed=seed)
    if "mc" not in sc.raw:
        raise ParseError("scenario has no 'mc' section")
    mc, a, p = sc.mc, sc.analysis, sc.profile
    d = p.m - p.l
    R_list = [float(r) for r in mc["R_list"]]
    R_tab = max(R_list) if math.isfinite(p.r_phi) else max(max(R_list), a["r_cap"])
    w = solve_sigma(p, R_tab, a["tol"])
    table = build_ratio_table(w, d, R_tab, tol=a["tol"], n_grid=a["grid_points"],
                              tail_tol=a["tail_tol"])
    tail = table.tail_status
    results = []
    for i, R in enumerate(R_list):
        t1 = time.perf_counter()
        est, tau, cens = simulate_exit_time(
            w, d, R, rho0=mc["rho0"], n_paths=mc["n_paths"], dt=mc["dt"], seed=mc["seed"],
            t_cap=mc["t_cap"], table=table, adaptive=mc["adaptive"], antithetic=mc["antithetic"],
            return_paths=True)
        ref = est.F_reference
        tolerance = max(3.0 * est.stderr_tau, MC_ABS_TOL)
        entry = est.to_dict()
        entry["tolerance"] = tolerance
        entry["abs_error"] = abs(est.mean_tau - ref)
        ok = entry["abs_error"] <= tolerance
        if not math.isfinite(p.r_phi) and tail.kind == "converged":
            cap = tail.value + 3.0 * est.stderr_tau
            entry["F_inf"] = tail.value
            entry["below_F_inf_cap"] = est.mean_tau <= cap
            ok = ok and entry["below_F_inf_cap"]
        entry["pass"] = bool(ok)
        if timings:
            entry["runtime_s"] = time.perf_counter() - t1
        if paths_csv:
            target = f"{Path(paths_csv).with_suffix('')}.R{i}.csv"
            write_paths_csv(target, tau, cens)
            entry["paths_csv"] = target
        results.append(entry)
    tdict = {"total_s": time.perf_counter() - start}
    rep = Report(command="simulate", input=sc.echo(), mc=results, timings=tdict if timings else None)
    return rep, EXIT_OK if all(r["pass"] for r in results) else EXIT_VIOLATED


# ---------------------------------------------------------------------------
# argument parsing


def _report_csv(rep: Report) -> str:
    """Flat ``key,value`` listing of the scalar estimate fields."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["field", "value"])
    for k, v in sorted(rep.estimate.items()):
        if not isinstance(v, (dict, list)):
            wr.writerow([k, _fmt(v)])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radialbounds", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--tol", type=float, help="ODE tolerance override")
        p.add_argument("--r-cap", type=float, dest="r_cap", help="window length when r_phi is infinite")
        p.add_argument("--seed", type=int, help="Monte Carlo master seed override")
        p.add_argument("--out", help="write the output here instead of stdout")
        p.add_argument("--format", choices=("json", "csv", "both"), help="output format override")
        p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings")

    common(sub.add_parser("analyze", help="bounds and verdicts for one scenario"))
    sw = sub.add_parser("sweep", help="rerun the analysis over a list of parameter values")
    common(sw)
    sw.add_argument("--param", required=True, help="k, H0, r_phi, m, l or a coefficient such as p[7]")
    sw.add_argument("--values", required=True, help="comma separated values ('inf' allowed)")
    sw.add_argument("--workers", type=int, help="worker processes (default: one per CPU)")
    sim = sub.add_parser("simulate", help="Monte Carlo exit times for mc.R_list")
    common(sim)
    sim.add_argument("--paths-csv", help="also write per-path exit times (one file per radius)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            rep, code = run_analyze(args.scenario, tol=args.tol, r_cap=args.r_cap, fmt=args.format,
                                    out=args.out, timings=not args.no_timings)
            fmt = rep.input["output"]["format"]
            if fmt == "json":
                _emit(rep.dumps(), args.out)
            elif fmt == "csv":
                _emit(_report_csv(rep), args.out)
            else:
                _emit(rep.dumps(), args.out)
                target = f"{Path(args.out).with_suffix('')}.csv" if args.out else None
                _emit(_report_csv(rep), target)
            return code
        if args.command == "sweep":
            values = [v for v in args.values.split(",") if v.strip()]
            if not values:
                raise ParseError("--values is empty")
            rows, code = run_sweep(args.scenario, args.param, values, workers=args.workers,
                                   tol=args.tol, r_cap=args.r_cap)
            _emit(sweep_csv(rows, args.param), args.out)
            return code
        rep, code = run_simulate(args.scenario, seed=args.seed, out=args.out,
                                 timings=not args.no_timings, paths_csv=args.paths_csv)
        _emit(rep.dumps(), args.out)
        return code
    except RadialBoundsError as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def validate_report(data: dict) -> None:
    """Check a decoded report against the shipped schema (raises on mismatch)."""
    import jsonschema

    jsonschema.validate(data, load_schema("report.schema.json"))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
