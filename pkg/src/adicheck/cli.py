"""
Command line entry point.

    adicheck run SCENARIO [--out report.json] [--series-dir DIR] [--figures-dir DIR] [--gauge G]
    adicheck sweep SCENARIO --param NAME --values v1,v2,... [--out table.csv] [--figures-dir DIR]
    adicheck validate SCENARIO

Exit status is 0 whatever the physics verdict; 1 on I/O errors, 2 on parse or
validation errors.
"""

import argparse
import json
import sys

from .errors import ParseError, ValidationError
from .flow import GAUGES
from .report import dumps_report, run_scenario, sweep, write_report, write_sweep_csv
from .scenario import load_scenario

EXIT_IO = 1
EXIT_PARSE = 2


def _parse_values(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}: {exc}") from exc


def build_parser():
    p = argparse.ArgumentParser(
        prog="adicheck",
        description="Check the validity of the adiabatic approximation for a scenario.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evaluate conditions and propagate one scenario")
    r.add_argument("scenario")
    r.add_argument("--out", help="report JSON path (default: stdout)")
    r.add_argument("--series-dir", help="write per-pair CSV series here")
    r.add_argument("--figures-dir", help="render PNG figures here")
    r.add_argument("--gauge", choices=GAUGES, help="override the scenario gauge")

    s = sub.add_parser("sweep", help="run a scenario over values of one parameter")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="T, epsilon or a scalar model parameter")
    s.add_argument("--values", required=True, type=_parse_values,
                   help="comma-separated values")
    s.add_argument("--out", help="CSV table path (default: stdout)")
    s.add_argument("--figures-dir", help="render a PNG summary here")

    v = sub.add_parser("validate", help="parse and validate a scenario file")
    v.add_argument("scenario")
    return p


def _load(path):
    try:
        return load_scenario(path), 0
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_IO
    except (ParseError, ValidationError) as exc:
        print(f"error: {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return None, EXIT_PARSE


def main(argv=None):
    args = build_parser().parse_args(argv)
    scen, code = _load(args.scenario)
    if scen is None:
        return code

    try:
        if args.command == "validate":
            print(json.dumps(scen.to_dict(), indent=2))
            return 0

        if args.command == "run":
            report = run_scenario(scen, series_dir=args.series_dir, gauge=args.gauge,
                                  figures_dir=args.figures_dir)
            if args.out:
                write_report(report, args.out)
                summ = report["summary"]
                print(f"verdict {summ['verdict']}  g_max {summ['g_max']}  "
                      f"max_coeff_drift {summ['max_coeff_drift']}  -> {args.out}")
            else:
                sys.stdout.write(dumps_report(report))
            return 0

        try:
            rows = sweep(scen, args.param, args.values, figures_dir=args.figures_dir)
        except ValidationError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_PARSE
        write_sweep_csv(rows, args.out or sys.stdout)
        return 0
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
