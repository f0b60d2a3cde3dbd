"""Command line: ``crisisdist validate | run | trace-replay``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid scenario
(format or economic assumptions), 4 trace replay mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .auction import ReplayMismatch, replay_terminal
from .market import Scenario, validate_scenario
from .numbers import parse_rational
from .scenario_io import (
    ScenarioFormatError,
    SellerSetup,
    load_scenario,
    parse_scenario,
    scenario_document,
    scenario_problems,
)
from .seller import run_seller_episode
from .sequence import issue_rights, market_scenario, run_episode
from .strategies import BASELINES, baseline
from .tables import TRACE_FORMAT, couple_tables, render_trace, seller_tables, trace_lines, write_tables

OK, RUNTIME, USAGE, INVALID, MISMATCH = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _load(path: str):
    try:
        # assumptions are checked after command line overrides
        return load_scenario(path, validate=False)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def cmd_validate(args) -> int:
    setup = _load(args.file)
    problems = scenario_problems(setup)
    for p in problems:
        print(p)
    if problems:
        print(f"{args.file}: {len(problems)} violation(s)")
        return INVALID
    if isinstance(setup, Scenario):
        for v in validate_scenario(setup, strict=True).violations:
            print(f"note: {v}")
    print(f"{args.file}: ok")
    return OK


def apply_overrides(setup, args):
    mechanism = "seller" if isinstance(setup, SellerSetup) else "couple"
    if args.mechanism and args.mechanism != mechanism:
        raise UsageError(f"--mechanism {args.mechanism} does not match the {mechanism} scenario in the file")
    if isinstance(setup, SellerSetup):
        if args.epsilon is not None:
            raise UsageError("--epsilon applies to couple scenarios only")
        cfg = setup.config
        changes = {k: v for k, v in (("seed", args.seed), ("markets", args.markets)) if v is not None}
        return SellerSetup(dataclasses.replace(cfg, **changes), args.strategy or setup.strategy)
    if args.strategy is not None:
        raise UsageError("--strategy applies to seller scenarios only")
    changes = {k: v for k, v in (("seed", args.seed), ("markets", args.markets)) if v is not None}
    if args.epsilon is not None:
        try:
            changes["epsilon"] = parse_rational(args.epsilon)
        except ValueError as exc:
            raise UsageError(f"--epsilon: {exc}") from None
    return dataclasses.replace(setup, **changes)


def execute(setup):
    """Run the episode; returns (episode, table rows)."""
    if isinstance(setup, SellerSetup):
        ep = run_seller_episode(setup.config, baseline(setup.strategy, setup.config))
        return ep, seller_tables(ep)
    ep = run_episode(setup)
    return ep, couple_tables(ep)


def cmd_run(args) -> int:
    setup = apply_overrides(_load(args.file), args)
    problems = scenario_problems(setup)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return INVALID
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create {out}: {exc.strerror}", file=sys.stderr)
        return RUNTIME
    ep, rows = execute(setup)
    write_tables(out, rows)
    (out / "trace.jsonl").write_text(render_trace(trace_lines(setup, ep)), encoding="utf-8")
    aborted = getattr(ep, "aborted", None)
    if aborted is not None:
        print(f"episode stopped after market {ep.t}:", file=sys.stderr)
        for v in aborted.violations:
            print(f"  {v}", file=sys.stderr)
        return RUNTIME
    print(f"{len(ep.markets)} market(s); tables and trace in {out}")
    return OK


def replay_trace(lines: list[dict]) -> str:
    """Check a trace against a fresh recomputation; returns a summary or raises ReplayMismatch."""
    if not lines or lines[0].get("kind") != "header" or lines[0].get("format") != TRACE_FORMAT:
        raise ScenarioFormatError(["trace: first line must be a crisisdist-trace header"])
    setup = parse_scenario(json.dumps(lines[0]["scenario"]), "trace header")
    body = lines[1:]
    if isinstance(setup, SellerSetup):
        ep, _ = execute(setup)
        expected = trace_lines(setup, ep)[1:]
        for k, (got, want) in enumerate(zip(body, expected)):
            if got != want:
                raise ReplayMismatch(f"market line {k + 1} differs from recomputation")
        if len(body) != len(expected):
            raise ReplayMismatch(f"trace has {len(body)} market lines, recomputation has {len(expected)}")
        return f"{len(body)} seller market(s) replayed"
    rights = issue_rights(setup)
    carried = {b.id: b.earmark for b in setup.buyers}
    markets: list[tuple[dict, list[dict]]] = []
    for line in body:
        if line["kind"] == "market":
            markets.append((line, []))
        elif line["kind"] == "aborted":
            break
        elif markets:
            markets[-1][1].append({k: v for k, v in line.items() if k != "market"})
        else:
            raise ReplayMismatch("auction event before the first market line")
    for head, events in markets:
        ms = market_scenario(setup, rights, carried)
        if head["scenario"] != scenario_document(ms):
            raise ReplayMismatch(f"market {head['market']}: scenario differs from the re-issued one")
        if not events or events[0].get("carry") != (head["market"] < setup.markets):
            raise ReplayMismatch(f"market {head['market']}: carry flag differs")
        st = replay_terminal(ms, events)
        carried = dict(st.earmark)
    return f"{len(markets)} couple market(s) replayed"


def cmd_trace_replay(args) -> int:
    try:
        text = Path(args.trace).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.trace}: {exc.strerror}") from None
    try:
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError([f"{args.trace}: {exc.msg}"]) from None
    try:
        print(replay_trace(lines))
    except (ReplayMismatch, KeyError, TypeError) as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return MISMATCH
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crisisdist", description="Fair rights allocation and crisis markets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file and report every violation")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a scenario and write tables and a trace")
    p.add_argument("file")
    p.add_argument("--seed", type=int)
    p.add_argument("--markets", type=int, metavar="T")
    p.add_argument("--epsilon", metavar="P/Q")
    p.add_argument("--mechanism", choices=("couple", "seller"))
    p.add_argument("--strategy", choices=BASELINES, help="seller-market baseline strategy")
    p.add_argument("--out", default="out", metavar="DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("trace-replay", help="recompute a trace and check it matches")
    p.add_argument("trace")
    p.set_defaults(func=cmd_trace_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crisisdist: {exc}", file=sys.stderr)
        return USAGE
    except ScenarioFormatError as exc:
        for p in exc.problems:
            print(p, file=sys.stderr)
        return INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        print(f"crisisdist: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME


if __name__ == "__main__":
    sys.exit(main())
