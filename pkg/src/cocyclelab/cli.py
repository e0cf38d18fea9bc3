"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 capacity (size cap) error,
4 internal numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import CapacityError, CocycleLabError, ConfigError, MissingSeriesError, RejectedInputError
from .runner import PLOT_SERIES, emit_plot_data, parse_report_text, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cocyclelab",
        description="Experiment runner for compact-cocycle spectra, domination certificates, and perturbations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config and emit a report")
    run_p.add_argument("config", help="path to the experiment config (JSON with // comments)")
    run_p.add_argument("--out", help="write the report to this path")
    run_p.add_argument("--seed", type=int, help="override the config seed (u64)")
    run_p.add_argument("--quiet", action="store_true", help="suppress the report on stdout")

    plot_p = sub.add_parser("plot-data", help="extract a columnar table from a report")
    plot_p.add_argument("report", help="path to a report file")
    plot_p.add_argument("--which", required=True, choices=PLOT_SERIES)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            run(args.config, out_path=args.out, seed=args.seed, quiet=args.quiet)
            return EXIT_OK
        if args.command == "plot-data":
            with open(args.report, "r", encoding="utf-8") as fh:
                report = parse_report_text(fh.read())
            sys.stdout.write(emit_plot_data(report, args.which))
            return EXIT_OK
        parser.error("unknown command")
    except (ConfigError, RejectedInputError, FileNotFoundError, MissingSeriesError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as err:
        print(f"capacity error: {err}", file=sys.stderr)
        return EXIT_CAPACITY
    except (CocycleLabError, ArithmeticError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
