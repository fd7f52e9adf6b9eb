"""Command-line entry point: ``susygci verify`` and ``susygci ensemble``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import harness
from .errors import ConfigError, UsageError

log = logging.getLogger("susygci")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser():
    p = _Parser(prog="susygci", description="Verify the Gaussian correlation inequality and its supporting identities.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run verification suites from a YAML config")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--suite", action="append", choices=harness.SUITES, help="restrict to this suite (repeatable)")
    v.add_argument("--seed", type=_u64, help="override the root seed")
    v.add_argument("--out", type=Path, help="report path (default: config 'output' or report.yaml)")
    v.add_argument("--jobs", type=_positive, help=f"worker processes (default ${harness.JOBS_ENV} or 1)")

    e = sub.add_parser("ensemble", help="print a reproducible ensemble of random correlation matrices")
    e.add_argument("--n", type=_positive, required=True)
    e.add_argument("--n1", type=_positive, required=True)
    e.add_argument("--count", type=_positive, default=1)
    e.add_argument("--seed", type=_u64, default=0)
    return p


def _verify(args) -> int:
    cfg = harness.load_config(args.config)
    if args.suite:
        cfg.suites = [s for s in harness.SUITES if s in args.suite]
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or Path(cfg.output or "report.yaml")
    jobs = args.jobs or harness.default_jobs()
    report = harness.run_suite(cfg, jobs=jobs)
    for rec in report["records"]:
        print(f"{rec['result'].upper():5s} {rec['name']}  [{rec['anchor']}]")
    written = harness.write_report(report, out)
    verdict = "PASS" if report["passed"] else "FAIL"
    print(f"{verdict}: {report['n_records'] - report['n_failed']}/{report['n_records']} checks passed; report at {written[0]}")
    return 0 if report["passed"] else 1


def _ensemble(args) -> int:
    specs = harness.generate_ensemble(args.n, args.n1, args.count, args.seed)
    doc = {"matrices": [{"name": s.name, "n1": s.n1, "rows": s.rows} for s in specs]}
    sys.stdout.write(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=200))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _verify(args) if args.command == "verify" else _ensemble(args)
    except ConfigError as exc:
        problems = exc.problems if getattr(exc, "problems", None) else [str(exc)]
        for line in problems:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
