"""Command-line entry point.

    driftlab list-scenarios
    driftlab describe <scenario>
    driftlab run <scenario-or-config.yaml> [--seed N] [--paths N] [--step H] [--out DIR]
    driftlab accept [suite] [--seed N] [--paths N] [--step H] [--out DIR] [--only C1,C2]

Exit codes: 0 all criteria pass, 1 a criterion fails, 2 configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .acceptance import SUITES, run_acceptance
from .scenarios import ConfigError, describe, list_scenarios, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--paths", type=int, help="override n_paths")
    p.add_argument("--step", type=float, help="override the time step h")
    p.add_argument("--out", default="results", help="output directory (default: results)")


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.paths is not None:
        out["n_paths"] = args.paths
    if args.step is not None:
        out["h"] = args.step
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftlab", description="Monte Carlo checks for diffusions with "
                                                  "singular drift.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("list-scenarios", help="list built-in scenarios")
    d = sub.add_parser("describe", help="print a built-in scenario config")
    d.add_argument("scenario")
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario", help="built-in name or path to a YAML config")
    _budget_flags(r)
    a = sub.add_parser("accept", help="run an acceptance suite")
    a.add_argument("suite", nargs="?", default="desk", help=f"one of {sorted(SUITES)}")
    a.add_argument("--only", help="comma-separated criterion ids")
    _budget_flags(a)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name, desc in list_scenarios():
                print(f"{name:28} {desc}")
            return EXIT_OK
        if args.command == "describe":
            print(describe(args.scenario), end="")
            return EXIT_OK
        if args.command == "run":
            res = run_scenario(args.scenario, args.out, _overrides(args))
            for v in res.verdicts:
                print(f"{v.criterion} {'PASS' if v.passed else 'FAIL'} estimate={v.estimate:.6g} "
                      f"target={v.target:.6g} ({v.tolerance})")
            if res.status == "error":
                print(res.error, file=sys.stderr)
            print(f"artifacts: {res.out_dir}")
            return res.exit_code
        if args.command == "accept":
            if args.suite not in SUITES:
                raise ConfigError(f"suite: unknown suite {args.suite!r}")
            only = None if not args.only else [s.strip() for s in args.only.split(",")]
            try:
                rep = run_acceptance(args.suite, args.out, _overrides(args), only,
                                     echo=lambda line: print(line, flush=True))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            print(f"suite {args.suite}: {'PASS' if rep.passed else 'FAIL'}")
            return rep.exit_code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
