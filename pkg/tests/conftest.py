from __future__ import annotations

from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import pytest

from chrv.engine import run
from chrv.syntax import parse_goal, parse_program
from chrv.tracer import extract_all, read_trace

ROOT = Path(__file__).resolve().parent.parent
PROGRAMS = ROOT / "programs"
DATA = Path(__file__).resolve().parent / "data"

LEQ_GOAL = "leq(A,B),leq(B,C),leq(C,A)"
COLORING_GOAL = "edges, l([r1,r7,r4,r3,r2,r5,r6],[C1,C7,C4,C3,C2,C5,C6])"

#: (program file stem, goal, budget); leq_compiled does not terminate.
CORPUS = [
    ("leq", LEQ_GOAL, 100_000),
    ("leq_compiled", LEQ_GOAL, 1_000),
    ("append", "append([1],[2],Z)", 100_000),
    ("coloring", COLORING_GOAL, 100_000),
    ("triangle", "graph", 100_000),
    ("primes", "candidate(20)", 100_000),
]


@lru_cache(maxsize=None)
def program(name: str):
    return parse_program((PROGRAMS / f"{name}.chr").read_text())


@lru_cache(maxsize=None)
def corpus_run(name: str, goal: str, mode: str, budget: int):
    return run(program(name), parse_goal(goal), mode, budget)


@lru_cache(maxsize=None)
def corpus_trace(name: str, goal: str, mode: str, budget: int):
    return tuple(extract_all(corpus_run(name, goal, mode, budget).records))


def golden_lines() -> list[str]:
    return (DATA / "leq_golden.trace").read_text().splitlines()


def golden_events():
    return read_trace((DATA / "leq_golden.trace").read_text())


def synthetic_trace(n: int):
    """A valid n-event trace made of shifted copies of a corpus trace."""
    base = corpus_trace("coloring", COLORING_GOAL, "all", 100_000)
    out = []
    offset = 0
    while len(out) < n:
        for e in base:
            if len(out) == n:
                break
            ref = None if e.ref is None else e.ref + offset
            out.append(replace(e, chrono=e.chrono + offset, ref=ref))
        offset += len(base)
    return out


# -- acceptance reporting -------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class AcceptanceRecorder:
    def __call__(self, number: int, ok: bool, detail: str = "") -> None:
        _ACCEPTANCE[number] = (ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
