"""Command-line entry point: ml2 <command> --config <path> --out <dir>.

Exit codes: 0 success, 2 config error, 3 numerical failure (divergent norm
outside the dichotomy commands), 4 unmet segment budgets.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, ML2Error
from .scenarios import COMMANDS, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ml2",
        description=(
            "Weighted-L2 approximation experiments: singular quadrature, "
            "integrability dichotomies, restricted polynomial fits, union and "
            "finite-window studies, and the comb-arc construction."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} scenario")
        p.add_argument("--config", required=True,
                       help="path to the JSON config, or '-' for stdin")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config == "-":
            config_text = sys.stdin.read()
        else:
            with open(args.config) as fh:
                config_text = fh.read()
    except OSError as exc:
        print(f"ml2: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(config_text, out_dir=args.out, command=args.command,
                     write_plots=not args.no_plots)
    except ConfigError as exc:
        print(f"ml2: config error: {exc}", file=sys.stderr)
        return 2
    except ML2Error as exc:
        print(f"ml2: numerical failure: {exc}", file=sys.stderr)
        return 3
    if report.exit_code != 0:
        kind = {3: "numerical failure", 4: "unmet budgets"}.get(report.exit_code, "failure")
        print(f"ml2: {kind} (details in report.json)", file=sys.stderr)
    else:
        print(f"ml2: {args.command} ok, hash {report.determinism_hash[:16]}…")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
