"""Command-line front end.

    monoflow check FILE [output and grid flags]
    monoflow scenario NAME [flags]
    monoflow list

Exit codes: 0 all verdicts pass (including expected negative outcomes),
1 violation found, 2 usage or parse error, 3 certificate rule rejection.
``MONOFLOW_SEED`` seeds sampling (default 0).
"""

from __future__ import annotations

import argparse
import os
import sys

from .dsl import lower, parse
from .errors import LowerError, ParseError, RuleError
from .report import RunSettings, dump_json, program_hash, run_check
from .scenarios import SCENARIOS, ScenarioConfig


def _add_common(p):
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--trace", help="write trace CSV here (label suffixes "
                   "added when a run produces several)")
    p.add_argument("--tol", type=float, help="relative tolerance override")
    p.add_argument("--grid", type=int, help="grid points per axis override")
    p.add_argument("--box", nargs=2, type=float, metavar=("LO", "HI"),
                   help="box override applied to every axis")
    p.add_argument("--tmin", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--tsteps", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--krot", type=int, default=2,
                   help="rotation samples for the group average")
    p.add_argument("--max4d", type=int, default=33,
                   help="cap on 4D grid points per axis")


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="monoflow",
        description="certify and numerically verify monotone heat-flow "
        "functionals",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    pc = sub.add_parser("check", help="run a program file")
    pc.add_argument("file")
    _add_common(pc)
    ps = sub.add_parser("scenario", help="run a named scenario")
    ps.add_argument("name", choices=sorted(SCENARIOS.keys()))
    _add_common(ps)
    sub.add_parser("list", help="list scenarios")
    return ap


def _trace_path(base: str, label: str, multiple: bool) -> str:
    if not multiple:
        return base
    root, ext = os.path.splitext(base)
    return f"{root}.{label}{ext or '.csv'}"


def _cmd_check(args, seed: int) -> int:
    try:
        with open(args.file) as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        checks = lower(parse(source))
    except (ParseError, LowerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    settings = RunSettings(
        tol=args.tol, grid=args.grid,
        box=tuple(args.box) if args.box else None,
        tmin=args.tmin, tmax=args.tmax, tsteps=args.tsteps,
        threads=args.threads, seed=seed,
    )
    src_hash = program_hash(source)
    reports = []
    traces = []
    try:
        for check in checks:
            out = run_check(check, src_hash, settings)
            reports.append(out["report"])
            traces.append((out["report"]["check_name"], out["trace"]))
    except RuleError as exc:
        print(f"rule rejection: {exc}", file=sys.stderr)
        if args.out:
            dump_json({"program_hash": src_hash, "verdict": "rule-rejection",
                       "rule": exc.rule, "condition": exc.condition,
                       "path": list(exc.path)}, args.out)
        return 3

    payload = reports[0] if len(reports) == 1 else {"checks": reports}
    text = dump_json(payload, args.out)
    if not args.out:
        sys.stdout.write(text)
    if args.trace:
        many = len(traces) > 1
        for label, tr in traces:
            tr.to_csv(_trace_path(args.trace, label, many))
    return 0 if all(r["verdict"] == "pass" for r in reports) else 1


def _cmd_scenario(args, seed: int) -> int:
    cfg = ScenarioConfig(
        grid=args.grid, tol=args.tol if args.tol is not None else 1e-7,
        threads=args.threads, krot=args.krot, max4d=args.max4d,
        tmin=args.tmin, tmax=args.tmax, tsteps=args.tsteps, seed=seed,
    )
    try:
        result = SCENARIOS[args.name](cfg)
    except RuleError as exc:
        print(f"rule rejection: {exc}", file=sys.stderr)
        return 3
    text = dump_json(result.to_dict(), args.out)
    if not args.out:
        sys.stdout.write(text)
    if args.trace and result.traces:
        many = len(result.traces) > 1
        for label, tr in result.traces:
            tr.to_csv(_trace_path(args.trace, label, many))
    for item in result.checks:
        status = "PASS" if item.passed else "FAIL"
        print(f"[{status}] {args.name}: {item.label}", file=sys.stderr)
    return 0 if result.passed else 1


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        seed = int(os.environ.get("MONOFLOW_SEED", "0"))
    except ValueError:
        seed = 0
    if args.command == "list":
        for name in sorted(SCENARIOS.keys()):
            print(name)
        return 0
    if args.command == "check":
        return _cmd_check(args, seed)
    return _cmd_scenario(args, seed)


if __name__ == "__main__":
    sys.exit(main())
