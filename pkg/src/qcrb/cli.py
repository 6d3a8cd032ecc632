"""Command-line scenario runner.

    qcrb run --config <path|name> [--out DIR] [--seed N] [--format json|csv|both]
    qcrb validate --config <path>
    qcrb list [--dir DIR]
    qcrb verify-report <path>

Exit codes: 0 success, 1 config error, 2 a Violated verdict (or a report
that fails verification), 3 internal numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import scenarios
from .config import TOL_ENV_VAR, tolerances_from_env
from .errors import ConfigInvalid, QcrbError

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATED, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("qcrb")


def _parser():
    ap = argparse.ArgumentParser(prog="qcrb", description="Quantum Cramer-Rao bound scenarios")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its report")
    run.add_argument("--config", required=True, help="config path or shipped scenario name")
    run.add_argument("--out", default=".", help="output directory (default: current)")
    run.add_argument("--seed", type=int, default=None, help="override the Monte Carlo / fuzz seed")
    run.add_argument("--format", choices=("json", "csv", "both"), default="both")
    run.add_argument("--dir", default=None, help="extra directory of scenario configs")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    val.add_argument("--dir", default=None)

    ls = sub.add_parser("list", help="list shipped (and custom) scenarios")
    ls.add_argument("--dir", default=None)

    ver = sub.add_parser("verify-report", help="check a report's declared matrix invariants")
    ver.add_argument("path")
    return ap


def _cmd_run(args):
    path = scenarios.find_scenario(args.config, args.dir)
    cfg = scenarios.load_config(path)
    env = tolerances_from_env()
    if env is not scenarios.DEFAULT_TOL:
        log.warning("%s is set; tolerance overrides applied for this exploratory run", TOL_ENV_VAR)
        cfg.setdefault("tolerances", {}).update(
            {k: v for k, v in env.as_dict().items() if v != scenarios.DEFAULT_TOL.as_dict()[k]})
    with np.errstate(all="ignore"):
        report = scenarios.run_scenario(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / cfg["name"]
    if args.format in ("json", "both"):
        stem.with_suffix(".json").write_text(scenarios.report_to_json(report))
    if args.format in ("csv", "both"):
        stem.with_suffix(".csv").write_text(scenarios.report_to_csv(report))
    s = report["summary"]
    counts = ", ".join(f"{k} {v}" for k, v in s["verdicts"].items() if v)
    print(f"{cfg['name']}: {counts or 'no bound verdicts'}; errors {s['errors']}")
    return EXIT_VIOLATED if s["violated"] else EXIT_OK


def _cmd_validate(args):
    try:
        path = scenarios.find_scenario(args.config, args.dir)
    except ConfigInvalid as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    diags = scenarios.validate_config(path)
    for d in diags:
        print(d, file=sys.stderr)
    if not diags:
        print(f"{path}: ok")
    return EXIT_CONFIG if diags else EXIT_OK


def _cmd_list(args):
    for name, desc, _ in scenarios.list_scenarios(args.dir):
        print(f"{name:28s} {desc}")
    return EXIT_OK


def _cmd_verify(args):
    try:
        report = json.loads(Path(args.path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = scenarios.verify_report(report)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_VIOLATED
    print(f"{args.path}: ok")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "validate": _cmd_validate, "list": _cmd_list,
               "verify-report": _cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigInvalid as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    except (QcrbError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
