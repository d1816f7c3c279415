"""Command-line interface.

Exit status: 0 success, 1 bad input (program, goal, trace or query),
2 no solution, 3 step budget exhausted, 4 faithfulness divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence, TextIO

from . import __version__
from .compiler import CompileError, compile_program, format_table
from .engine import DEFAULT_BUDGET, Engine, ExecutionState, Mode, finished
from .query import QueryError, Query, eval_query, count_query, parse_predicate, parse_query
from .rebuild import check_faithfulness
from .syntax import ParseError, format_constraint, format_term, parse_goal, parse_program
from .tracer import Port, TraceError, extract, read_trace, serialize_event

EXIT_OK, EXIT_INPUT, EXIT_NO_SOLUTION, EXIT_BUDGET, EXIT_DIVERGENCE = 0, 1, 2, 3, 4


class _InputError(Exception):
    pass


def _load_program(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror}") from None
    try:
        program = parse_program(text)
        return program, compile_program(program)
    except (ParseError, CompileError) as exc:
        raise _InputError(f"{path}: {exc}") from None


def _load_goal(text: str):
    try:
        return parse_goal(text)
    except ParseError as exc:
        raise _InputError(f"goal: {exc}") from None


def _load_trace(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return read_trace(fh)
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror}") from None
    except TraceError as exc:
        raise _InputError(f"{path}: {exc}") from None


def format_solution(s: ExecutionState) -> str:
    udcs = ",".join(format_constraint(ic.constraint) for ic in s.udc)
    builts = ",".join(f"{n}={format_term(v)}" for n, v in s.builtins.bindings.items())
    return f"Solution:\n     UDCS = [{udcs}]\n     BUILTS = [{builts}]"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_run(args, out: TextIO, err: TextIO) -> int:
    _, table = _load_program(args.program)
    goal = _load_goal(args.goal)
    mode = Mode.ALL if args.all else Mode.FIRST
    eng = Engine(table, goal, mode)
    to_stdout = args.trace == "-"
    sink = None
    if args.trace and not to_stdout:
        sink = open(args.trace, "w", encoding="utf-8")
    elif to_stdout:
        sink = out
    report = err if to_stdout else out
    config = eng.initial()
    written = 0
    skipped: dict[int, int] = {}  # original chrono -> new chrono
    try:
        for chrono, record, config in eng.steps(config, args.budget):
            if sink is None:
                continue
            ev = extract(record, chrono)
            if args.no_default_events:
                if ev.port is Port.DEFAULT:
                    continue
                ev = _renumber(ev, written, skipped)
            sink.write(serialize_event(ev) + "\n")
            written += 1
    finally:
        if sink is not None and sink is not out:
            sink.close()
    for s in config.solutions:
        print(format_solution(s), file=report)
    if not finished(config, eng.mode):
        print(f"step budget of {args.budget} exhausted", file=err)
        return EXIT_BUDGET
    if not config.solutions:
        print("No solution.", file=report)
        return EXIT_NO_SOLUTION
    return EXIT_OK


def _renumber(ev, new_chrono: int, remap: dict):
    remap[ev.chrono] = new_chrono
    ref = ev.ref if ev.ref is None else remap[ev.ref]
    return replace(ev, chrono=new_chrono, ref=ref)


def _query_arg(text: str) -> Query:
    stripped = text.strip()
    if stripped.lower().startswith("select"):
        return parse_query(stripped)
    return Query(None, parse_predicate(stripped))


def cmd_query(args, out: TextIO, err: TextIO) -> int:
    try:
        q = parse_query(args.query)
    except QueryError as exc:
        raise _InputError(f"query: {exc}") from None
    events = _load_trace(args.trace)
    if args.count:
        print(count_query(q, events), file=out)
    else:
        for row in eval_query(q, events):
            print(row, file=out)
    return EXIT_OK


def cmd_pretty(args, out: TextIO, err: TextIO) -> int:
    try:
        q = _query_arg(args.query) if args.query else Query(None)
    except QueryError as exc:
        raise _InputError(f"query: {exc}") from None
    events = _load_trace(args.trace)
    q = Query(None, q.predicate)
    for row in eval_query(q, events):
        print(row, file=out)
    return EXIT_OK


def cmd_check(args, out: TextIO, err: TextIO) -> int:
    _, table = _load_program(args.program)
    goal = _load_goal(args.goal)
    trace = _load_trace(args.trace) if args.trace else None
    mode = Mode.ALL if args.all else Mode.FIRST
    report = check_faithfulness(table, goal, mode, args.budget, trace)
    print(("ok: " if report.ok else "") + str(report), file=out)
    return EXIT_OK if report.ok else EXIT_DIVERGENCE


def cmd_compile(args, out: TextIO, err: TextIO) -> int:
    _, table = _load_program(args.program)
    out.write(format_table(table))
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _budget(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("budget must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chrv", description="CHR-or engine with a generic tracer, rebuilder and trace queries.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a goal and emit its generic trace")
    p.add_argument("-p", "--program", required=True, help="CHR-or source file")
    p.add_argument("-g", "--goal", required=True, help="goal, e.g. 'leq(A,B),leq(B,A)'")
    p.add_argument("--all", action="store_true", help="enumerate all solutions")
    p.add_argument("--budget", type=_budget, default=DEFAULT_BUDGET, help="step budget")
    p.add_argument("--trace", metavar="OUT", help="trace file, or '-' for stdout")
    p.add_argument("--no-default-events", action="store_true",
                   help="omit Default events (chronos are renumbered)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="filter a trace file with a SELECT query")
    p.add_argument("--trace", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--count", action="store_true", help="print only the number of rows")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("check", help="rebuild a trace and verify faithfulness")
    p.add_argument("-p", "--program", required=True)
    p.add_argument("-g", "--goal", required=True)
    p.add_argument("--trace", help="trace file to check (default: run the engine)")
    p.add_argument("--all", action="store_true")
    p.add_argument("--budget", type=_budget, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("pretty", help="print selected events one per line")
    p.add_argument("--trace", required=True)
    p.add_argument("--query", help="SELECT query or bare predicate")
    p.set_defaults(func=cmd_pretty)

    p = sub.add_parser("compile", help="dump the occurrence table")
    p.add_argument("-p", "--program", required=True)
    p.set_defaults(func=cmd_compile)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None,
         err: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out, err)
    except _InputError as exc:
        print(f"chrv: {exc}", file=err)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
