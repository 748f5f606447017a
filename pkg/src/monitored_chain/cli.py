"""Command-line interface: run ensembles, validate backends, analyze results.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ensemble, observables, validation
from .errors import ConfigError, MonitoredChainError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _cmd_run(args) -> int:
    plan = ensemble.load_plan(args.plan)
    print(
        f"plan: {len(plan.points)} point(s) x {plan.trajectories_per_point} trajectories "
        f"on backend '{plan.backend}' -> {plan.output_dir}"
    )
    log = print if args.verbose else None
    results = ensemble.run_ensemble(plan, workers=args.workers, log=log)
    ensemble.emit_outputs(results, plan)
    failed = [r for r in results if r["status"] != "ok"]
    for res in results:
        tag = "ok" if res["status"] == "ok" else f"FAILED ({res['n_failed']} trajectories)"
        print(
            f"point {res['point_index']}: L={res['L']} U={res['U']} "
            f"gamma={res['gamma']} {res['observable']} -> {tag}"
        )
    print(f"outputs written under {plan.output_dir}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_validate(args) -> int:
    failures = validation.run_all()
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_NUMERICAL
    print("all cross-checks passed")
    return EXIT_OK


def _cmd_scan(args) -> int:
    result = ensemble.scan_results_dir(args.results_dir)
    out_path = Path(args.results_dir) / "scan.json"
    out_path.write_text(json.dumps(result, sort_keys=True, indent=1))
    for group in result["groups"]:
        head = f"U={group['U']} {group['observable']}"
        if group["status"] == "ok":
            print(
                f"{head}: crossing gamma* = {group['gamma_star']:.4f} "
                f"(grid resolution {group['grid_resolution']:.4f})"
            )
        else:
            print(f"{head}: crossing undetermined ({group.get('reason', 'see diagnostics')})")
        for row in group.get("rows", []):
            print(
                f"  gamma={row['gamma']:<8g} L={row['L']:<4d} "
                f"delta_nu={row['delta_nu']:.6f} +/- {row['delta_nu_se']:.6f} "
                f"slope={row['slope']:.4f}"
            )
    print(f"scan written to {out_path}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    summary = ensemble.load_summary(args.results_dir)
    fits = []
    for entry in summary["points"]:
        if entry.get("status") != "ok":
            continue
        L = entry["L"]
        profile = observables.EntropyProfile(
            S=np.asarray(entry["aggregate"]["entropy"]), L=L
        )
        ell_range = None
        if args.ell_min is not None or args.ell_max is not None:
            lo = args.ell_min if args.ell_min is not None else 2
            hi = args.ell_max if args.ell_max is not None else L - 2
            ell_range = range(lo, hi + 1)
        fit = observables.cft_fit(profile, L, ell_range)
        fits.append(
            {
                "point_index": entry["point_index"],
                "L": L,
                "U": entry["U"],
                "gamma": entry["gamma"],
                "observable": entry["observable"],
                "alpha": fit.alpha,
                "s0": fit.s0,
                "residual": fit.residual,
            }
        )
        print(
            f"point {entry['point_index']}: L={L} gamma={entry['gamma']} -> "
            f"alpha={fit.alpha:.4f} s0={fit.s0:.4f} residual={fit.residual:.2e}"
        )
    out_path = Path(args.results_dir) / "fits.json"
    out_path.write_text(json.dumps({"fits": fits}, sort_keys=True, indent=1))
    print(f"fits written to {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monitored-chain",
        description="Quantum trajectories of monitored fermionic chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an ensemble plan (TOML)")
    p_run.add_argument("plan", help="path to the plan file")
    p_run.add_argument("--workers", type=int, default=None, help="worker processes")
    p_run.add_argument("--verbose", action="store_true", help="log each trajectory")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="run the oracle cross-check suite")
    p_val.set_defaults(func=_cmd_validate)

    p_scan = sub.add_parser("scan", help="finite-size gap analysis of saved results")
    p_scan.add_argument("results_dir")
    p_scan.set_defaults(func=_cmd_scan)

    p_fit = sub.add_parser("fit", help="chord-length entropy fits of saved results")
    p_fit.add_argument("results_dir")
    p_fit.add_argument("--ell-min", type=int, default=None)
    p_fit.add_argument("--ell-max", type=int, default=None)
    p_fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonitoredChainError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
