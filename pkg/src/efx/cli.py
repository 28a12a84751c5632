"""Command line entry point: ``efx run``, ``efx curves`` and ``efx verify``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ResourceError
from .report import dumps, emit_curves, write_report
from .runner import EXIT_FAIL, EXIT_INPUT, EXIT_OK, run_scenario
from .scenario import ScenarioError, load_scenario
from .suites import SUITES, verify_suite


def _err(msg: str) -> None:
    print(f"efx: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        _err(f"invalid scenario {args.scenario}: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _err(f"cannot read scenario: {exc}")
        return EXIT_INPUT
    try:
        report, code = run_scenario(sc)
    except ResourceError as exc:
        _err(f"resource cap exceeded: {exc}")
        return EXIT_INPUT
    write_report(report, args.out)
    s = report["summary"]
    print(f"{sc.name}: {s['total']} analyses, {s['pass']} pass, {s['fail']} fail, {s['error']} error -> {args.out}")
    return code


def cmd_curves(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read report {args.report}: {exc}")
        return EXIT_INPUT
    written = emit_curves(report, args.dir)
    if not written:
        print("no curves in report; nothing written")
    for path in written:
        print(path)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        _err(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES + ('all',))}")
        return EXIT_INPUT
    report = verify_suite(args.suite, args.seed)
    if args.out:
        write_report(report, args.out)
    else:
        sys.stdout.write(dumps(report))
    s = report["summary"]
    print(
        f"verify {args.suite} seed={args.seed}: {s['total']} checks, {s['pass']} pass, "
        f"{s['fail']} fail, {s['not_applicable']} not applicable",
        file=sys.stderr,
    )
    return EXIT_FAIL if s["fail"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="efx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file and write a JSON report")
    run.add_argument("scenario")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)
    curves = sub.add_parser("curves", help="write modulus curves of a report as CSV files")
    curves.add_argument("report")
    curves.add_argument("--dir", required=True)
    curves.set_defaults(func=cmd_curves)
    verify = sub.add_parser("verify", help="run a built-in verification suite")
    verify.add_argument("suite")
    verify.add_argument("--seed", type=int, required=True)
    verify.add_argument("--out")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
