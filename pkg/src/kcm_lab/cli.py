"""Command line entry point: ``kcm-lab <subcommand> --config PATH [--seed N] [--jobs N] [--out DIR]``.

Exit codes: 0 when every acceptance rule passes, 2 when one fails, 1 on any
error (bad config, unknown subcommand, failed operation).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import SCHEMAS, ConfigError, validate
from .report import NothingToPlot, atomic_write, emit_plot_data
from .trials import JOBS_ENV

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def build_parser():
    p = _Parser(prog="kcm-lab", description="Front, cutoff and relaxation experiments for FA-1f.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SCHEMAS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--jobs", type=int, help=f"worker threads (default ${JOBS_ENV} or 1)")
        s.add_argument("--out", help="output directory")
    return p


def load_doc(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def write_outputs(out, report, artifacts):
    for name, text in artifacts.items():
        atomic_write(os.path.join(out, name), text)
    try:
        atomic_write(os.path.join(out, "plot.csv"), emit_plot_data(report))
    except NothingToPlot:
        pass
    atomic_write(os.path.join(out, "report.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        doc = load_doc(args.config)
        doc.setdefault("subcommand", args.subcommand)
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg = validate(doc, args.subcommand)
    except ConfigError as e:
        for path, msg in e.violations:
            print(f"config error: {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    jobs = args.jobs or cfg.jobs or None
    if jobs is not None and jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    out = args.out or cfg.out or os.path.join("results", cfg.subcommand)

    from .report import build_report
    from .runner import run
    try:
        report, artifacts = run(cfg, jobs)
    except Exception as e:  # reported, not raised: the exit code carries it
        report = build_report(cfg.echo(), {"error": f"{type(e).__name__}: {e}"}, {}, {})
        report["passed"] = False
        atomic_write(os.path.join(out, "report.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    write_outputs(out, report, artifacts)
    for rule, ok in report["acceptance"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {rule}")
    print(f"report: {os.path.join(out, 'report.json')}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
