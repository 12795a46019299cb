"""Command-line batch driver: ``moller-dirac run <config> [--suite NAME]... [--grid N,...] [--out DIR] [--seed S]``.

Exit codes: 0 when every selected check passes, 1 when a check fails, 2 for
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import verify
from .config import SUITE_NAMES, ConfigError, load_config

REPORT_SCHEMA_VERSION = "1.0.0"


def report_schema_version() -> str:
    """Version string written into the ``schema`` field of every JSON report."""
    return REPORT_SCHEMA_VERSION


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def _value(results: dict, check: str, name: str):
    for m in results[check].measurements:
        if m.name == name:
            return m.value
    return None


def _suite_fields(suite: str, results: dict) -> dict:
    """Headline fields of a suite report."""
    if suite == "moller":
        uni = results["moller_unitarity"]
        trip = results["moller_round_trip"]
        return {
            "deviation": uni.data.get("deviation"),
            "order_estimate": uni.data.get("order_estimate"),
            "round_trip_error": trip.ladders["round_trip"].errors[-1],
            "round_trip_order_estimate_rk4": trip.ladders["round_trip_rk4"].order,
        }
    if suite == "state":
        gs, pull, car = results["ground_state"], results["state_pullback"], results["car_layer"]
        mins = [v for v in (_value(results, "ground_state", "Q_spectrum_min"), _value(results, "state_pullback", "Q0_spectrum_min")) if v is not None]
        maxs = [v for v in (_value(results, "ground_state", "Q_spectrum_max"), _value(results, "state_pullback", "Q0_spectrum_max")) if v is not None]
        gam = [v for v in (_value(results, "ground_state", "gamma_residual"), _value(results, "state_pullback", "Q0_gamma_residual")) if v is not None]
        return {
            "Q_spectrum_min": min(mins) if mins else None,
            "Q_spectrum_max": max(maxs) if maxs else None,
            "gamma_residual": max(gam) if gam else None,
            "positivity_min": _value(results, "car_layer", "positivity_min"),
            "two_point_samples": pull.data.get("two_point_samples", []),
            "lowest_level_shooting": gs.data.get("shooting"),
            "lowest_level_extrapolated": gs.data.get("extrapolated"),
            "car_residual_max": max(m.value for m in car.measurements if m.relation == "<="),
        }
    if suite == "evolve":
        sol = results["solver_convergence"]
        return {
            "order_estimate": sol.ladders["solution_error"].order,
            "energy_drift": _value(results, "solver_convergence", "energy_drift_finest"),
        }
    return {}


def _write_csv(path: Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _convergence_rows(results: dict) -> list[list]:
    rows = [["check", "quantity", "N", "error", "pairwise_order", "order", "roundoff_limited", "passes"]]
    for check, res in results.items():
        for quantity, est in res.ladders.items():
            for i, (n, err) in enumerate(zip(est.grid_sizes, est.errors)):
                pair = est.pairwise[i - 1] if i > 0 else ""
                rows.append([check, quantity, n, err, pair, est.order, est.roundoff_limited, est.passes(verify.ORDER_MIN)])
    return rows


def run_suite(suite: str, setup: verify.Setup, cfg, out: Path) -> tuple[bool, list[str]]:
    """Run one suite, write its JSON summary and CSV traces, and return (passed, failing names)."""
    results = {name: verify.run_check(name, setup) for name in verify.SUITES[suite]}
    failing = [f"{name}.{m}" for name, res in results.items() for m in res.failures]
    report = {
        "schema": REPORT_SCHEMA_VERSION,
        "suite": suite,
        "config_name": cfg.name,
        "config_hash": cfg.hash,
        "grid_sizes": list(setup.grid_sizes),
        "seed": setup.seed,
        "passed": not failing,
        "failing": failing,
        **_suite_fields(suite, results),
        "checks": [res.as_dict() for res in results.values()],
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{suite}.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    if suite == "convergence":
        _write_csv(out / "convergence.csv", _convergence_rows(results))
    else:
        for res in results.values():
            for stem, rows in res.traces.items():
                _write_csv(out / f"{stem}.csv", rows)
    return not failing, failing


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated integers, got {text!r}") from None
    if len(grid) < 2:
        raise argparse.ArgumentTypeError("grid ladder needs at least two sizes")
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moller-dirac", description="Verification driver for Dirac Moller operators.")
    parser.add_argument("--version", action="version", version=f"report schema {REPORT_SCHEMA_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run verification suites from a JSON config")
    run.add_argument("config", help="path to a run configuration (JSON)")
    run.add_argument("--suite", action="append", choices=SUITE_NAMES, help="suite to run; repeatable (default: config selection)")
    run.add_argument("--grid", type=_parse_grid, help="grid ladder override, e.g. 100,200,400")
    run.add_argument("--out", help="output directory (default: config 'output' or ./reports)")
    run.add_argument("--seed", type=int, help="seed override for random trials")
    sub.add_parser("schema-version", help="print the report schema version")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema-version":
        print(REPORT_SCHEMA_VERSION)
        return 0
    overrides = {}
    if args.grid is not None:
        overrides["grid"] = args.grid
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.suite:
        overrides["suites"] = list(dict.fromkeys(args.suite))
    if args.out:
        overrides["output"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    setup = verify.setup_from_config(cfg)
    out = Path(cfg.output)
    all_ok = True
    for suite in cfg.suites:
        ok, failing = run_suite(suite, setup, cfg, out)
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {suite}" + (f": {', '.join(failing)}" if failing else ""))
    if not all_ok:
        print("one or more acceptance thresholds failed", file=sys.stderr)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
