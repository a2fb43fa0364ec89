"""Command-line entry point.

Subcommands: gen-data, run, sweep, baselines, theory.
Exit codes: 0 success, 1 check/assertion failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import data, harness
from .checks import run_theory_checks

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config (INI)")
    sub.add_argument("--seed", type=int, default=None, help="override master seed")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cclkit")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen-data", help="synthesize a dataset and write it as CSV")
    _add_common(gen)
    gen.add_argument("--name", default="dataset.csv", help="output file name")

    run = subs.add_parser("run", help="full train -> attack -> evaluate pipeline")
    _add_common(run)

    sweep = subs.add_parser("sweep", help="alpha sweep over seeds")
    _add_common(sweep)

    base = subs.add_parser("baselines", help="baseline-defense grids")
    _add_common(base)

    theory = subs.add_parser("theory", help="Monte-Carlo theory checks")
    theory.add_argument("--config", required=False, default=None)
    theory.add_argument("--seed", type=int, default=0)
    theory.add_argument("--out", default=".")
    theory.add_argument("--jobs", type=int, default=1)
    theory.add_argument("--samples", type=int, default=10**6)

    return parser


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.parse_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    data_seed, _ = harness._derived_seeds(cfg.seed, harness.STREAM_DATA)
    ds = harness.build_dataset(cfg, data_seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, args.name)
    data.save_csv(ds, path, header=True)
    print(f"wrote {path} ({len(ds)} rows, {ds.num_classes} classes)")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = harness.run_pipeline(cfg)
    report_path, epochs_path = harness.write_report(result, args.out)
    print(f"wrote {report_path} and {epochs_path}")
    print(
        f"test_acc={result.report['target']['test_acc']:.4f} "
        f"max_adv={result.report['max_adv']:.4f} p1={result.report['p1']:.4f}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows, errors = harness.run_sweep(cfg, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep.csv")
    harness.write_sweep_csv(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")
    for ctx, err in errors:
        print(f"setting failed: {ctx}: {err}", file=sys.stderr)
    return EXIT_OK if not errors else EXIT_CHECK_FAILED


def cmd_baselines(args) -> int:
    cfg = _load_config(args)
    rows, errors = harness.run_baselines(cfg, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep.csv")
    harness.write_sweep_csv(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")
    for ctx, err in errors:
        print(f"setting failed: {ctx}: {err}", file=sys.stderr)
    return EXIT_OK if not errors else EXIT_CHECK_FAILED


def cmd_theory(args) -> int:
    try:
        verdict = run_theory_checks(args.seed, args.samples)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "theory.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(verdict, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for check in verdict["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}")
    print(f"wrote {path}")
    return EXIT_OK if verdict["all_passed"] else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "gen-data": cmd_gen_data,
        "run": cmd_run,
        "sweep": cmd_sweep,
        "baselines": cmd_baselines,
        "theory": cmd_theory,
    }
    try:
        return handlers[args.command](args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.StageError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
