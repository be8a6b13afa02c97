"""Command line: ``cornercase run | report | validate``.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .dsl import ScriptError, Severity, check
from .harness import (
    HarnessError,
    ReportError,
    apply_overrides,
    cmd_report,
    cmd_run,
    load_config,
    rerun_from_manifest,
)
from .scenario_model import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cornercase", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run GA and random baselines")
    run.add_argument("--config", type=Path, help="YAML experiment config")
    run.add_argument(
        "--scenario", action="append", dest="scenarios", metavar="ID|SCRIPT",
        help="scenario id (A-F) or .ccs script; repeatable",
    )
    run.add_argument("--seed", type=int)
    run.add_argument("--generations", type=int)
    run.add_argument("--population", type=int)
    run.add_argument("--repetitions", type=int)
    run.add_argument("--baseline", choices=("random_matched", "none"))
    run.add_argument("--jobs", type=int)
    run.add_argument("--out", type=str)
    run.add_argument("--manifest", type=Path, help="re-run exactly the experiment recorded in a manifest")

    report = sub.add_parser("report", help="compare GA against random for one or more runs")
    report.add_argument("run_dirs", nargs="+", type=Path)
    report.add_argument("--out", type=Path, help="output directory (default: first run dir)")

    validate = sub.add_parser("validate", help="check a .ccs scenario script")
    validate.add_argument("script", type=Path)
    return parser


def _run(args) -> int:
    if args.manifest is not None:
        if args.out is None:
            raise ConfigError("--manifest requires --out")
        manifest = rerun_from_manifest(args.manifest, args.out, args.jobs)
    else:
        cfg = load_config(args.config)
        cfg = apply_overrides(
            cfg,
            {
                "scenarios": args.scenarios,
                "seed": args.seed,
                "generations": args.generations,
                "population": args.population,
                "repetitions": args.repetitions,
                "baseline": args.baseline,
                "jobs": args.jobs,
                "out": args.out,
            },
        )
        manifest = cmd_run(cfg)
    print(f"run {manifest.run_id}: {manifest.simulation_count} simulations, {manifest.stats_rows} stats rows")
    return EXIT_OK


def _report(args) -> int:
    paths = cmd_report(args.run_dirs, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _validate(args) -> int:
    try:
        source = args.script.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{args.script}: cannot read: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    diags = check(source)
    for d in diags:
        print(f"{args.script}:{d}", file=sys.stderr)
    if any(d.severity is Severity.ERROR for d in diags):
        return EXIT_USAGE
    print(f"{args.script}: ok")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _run, "report": _report, "validate": _validate}[args.command]
    try:
        return handler(args)
    except (ConfigError, ScriptError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
