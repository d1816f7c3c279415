import itertools
import time
from collections import Counter

import pytest

from chrv.compiler import compile_program
from chrv.engine import (
    Action, Active, Configuration, Engine, ExecutionState, GoalRDC, Mode, init, run,
)
from chrv.store import IdentifiedConstraint, UdcStore, deref
from chrv.syntax import (
    Constraint, GlobalVar, format_term, parse_goal,
)

from conftest import COLORING_GOAL, CORPUS, LEQ_GOAL, corpus_run, program


def solution_value(state, name):
    return deref(GlobalVar(name), state.builtins)


def test_init():
    c = init(parse_goal(LEQ_GOAL))
    (s,) = c.states
    assert [type(i) for i in s.stack] == [GoalRDC] * 3
    assert s.next_id == 1 and not s.udc and s.builtins.consistent and not s.history
    (s,) = init(parse_goal("append([1],[2],Z)")).states
    assert len(s.stack) == 1


def test_empty_goal_is_a_trivial_solution():
    r = run(program("leq"), parse_goal("true"))
    assert len(r.solutions) == 1 and r.virtual_trace == []


def test_leq_solution():
    r = corpus_run("leq", LEQ_GOAL, "first", 100_000)
    (s,) = r.solutions
    assert not s.udc
    assert solution_value(s, "B") == GlobalVar("A")
    assert solution_value(s, "C") == GlobalVar("A")


def test_leq_action_sequence():
    r = corpus_run("leq", LEQ_GOAL, "first", 100_000)
    seq = [(a.action.value, a.rule) for a in r.records if a.action is not Action.DEFAULT]
    assert seq == [
        ("Activate", None), ("Drop", None), ("Activate", None),
        ("Apply1", "transitivity"), ("Apply2", "transitivity"),
        ("Activate", None), ("Drop", None), ("Drop", None), ("Activate", None),
        ("Apply1", "antisymmetry"), ("Apply2", "antisymmetry"), ("SolveWake", None),
        ("Reactivate", None), ("Apply1", "antisymmetry"), ("Apply2", "antisymmetry"),
        ("SolveWake", None), ("Drop", None)]


def test_append_solution_and_branches():
    r = corpus_run("append", "append([1],[2],Z)", "all", 100_000)
    (s,) = r.solutions
    assert format_term(solution_value(s, "Z")) == "[1,2]"
    counts = Counter(a.action for a in r.records)
    assert counts[Action.SPLIT] == 2 and counts[Action.FAIL] == 2
    first_split = next(i for i, a in enumerate(r.records) if a.action is Action.SPLIT)
    # the X=[] branch is tried first and fails on the non-empty list
    assert r.records[first_split + 1].action is Action.SOLVE_WAKE
    assert r.records[first_split + 2].action is Action.FAIL


def test_drop_past_last_occurrence():
    table = compile_program(program("leq_compiled"))
    eng = Engine(table, parse_goal(LEQ_GOAL))
    ic = IdentifiedConstraint(Constraint("leq", (GlobalVar("A"), GlobalVar("B"))), 201)
    s = ExecutionState(stack=(Active(ic, 7),), udc=UdcStore((ic,)), next_id=202)
    record, after = eng.step(Configuration((s,)), 0)
    assert record.action is Action.DROP
    assert after.solutions and not after.states


def brute_force_triangle():
    colors = "rgb"
    return {(x, y, z) for x, y, z in itertools.product(colors, repeat=3)
            if x != y and x != z and y != z}


def triangle_assignment(state):
    got = {}
    for ic in state.udc:
        if ic.constraint.functor == "edge":
            node, color = ic.constraint.args
            got[node.value] = deref(color, state.builtins).value
    return got[1], got[2], got[3]


def test_triangle_all_solutions_match_brute_force():
    start = time.perf_counter()
    r = run(program("triangle"), parse_goal("graph"), Mode.ALL)
    assert time.perf_counter() - start < 1
    got = [triangle_assignment(s) for s in r.solutions]
    assert len(got) == 6 == len(set(got))
    assert set(got) == brute_force_triangle()


COLORING_DOMAINS = {"r1": "rbg", "r2": "bg", "r3": "rb", "r4": "rb", "r5": "rg",
                    "r6": "rgt", "r7": "rb"}
COLORING_EDGES = [("r1", "r2"), ("r1", "r3"), ("r1", "r4"), ("r1", "r7"), ("r2", "r6"),
                  ("r3", "r7"), ("r4", "r5"), ("r4", "r7"), ("r5", "r6"), ("r5", "r7")]


def test_coloring_all_solutions_match_brute_force():
    nodes = sorted(COLORING_DOMAINS)
    oracle = set()
    for combo in itertools.product(*(COLORING_DOMAINS[n] for n in nodes)):
        a = dict(zip(nodes, combo))
        if all(a[x] != a[y] for x, y in COLORING_EDGES):
            oracle.add(tuple(sorted(a.items())))
    r = corpus_run("coloring", COLORING_GOAL, "all", 100_000)
    got = []
    for s in r.solutions:
        a = {}
        for ic in s.udc:
            if ic.constraint.functor == "node":
                node, color = ic.constraint.args
                a[node.value] = deref(color, s.builtins).value
        got.append(tuple(sorted(a.items())))
    assert len(got) == len(set(got))
    assert set(got) == oracle


def test_primes():
    r = corpus_run("primes", "candidate(20)", "first", 100_000)
    (s,) = r.solutions
    got = sorted(ic.constraint.args[0].value for ic in s.udc)
    assert got == [n for n in range(2, 21) if all(n % d for d in range(2, n))]


def test_guard_failure_tries_next_candidate():
    r = corpus_run("primes", "candidate(20)", "first", 100_000)
    recs = r.records
    for i, a in enumerate(recs):
        if a.action is Action.APPLY1 and (i + 1 == len(recs) or recs[i + 1].action is not Action.APPLY2):
            assert recs[i + 1].action in (Action.APPLY1, Action.DEFAULT)
            break
    else:
        pytest.fail("expected a failed guard in the primes run")


def test_first_mode_stops_after_one_solution():
    r = corpus_run("triangle", "graph", "first", 100_000)
    assert len(r.solutions) == 1
    assert r.final.states  # alternatives left unexplored


def test_budget_truncation():
    r = run(program("leq_compiled"), parse_goal(LEQ_GOAL), budget=50)
    assert r.truncated and len(r.virtual_trace) == 50 and not r.solutions


def test_inconsistent_goal_fails_without_apply():
    r = run(program("leq"), parse_goal("X = 1, X = 2"))
    assert [a.action for a in r.records] == [Action.SOLVE_WAKE, Action.SOLVE_WAKE, Action.FAIL]
    assert r.records[-1].ref is None and not r.solutions


# -- run invariants over the whole corpus --------------------------------------------

RUNS = [(n, g, m, b) for n, g, b in CORPUS for m in ("first", "all")]


@pytest.mark.parametrize("name,goal,mode,budget", RUNS)
def test_run_invariants(name, goal, mode, budget):
    r = corpus_run(name, goal, mode, budget)
    again = run(program(name), parse_goal(goal), mode, budget)
    assert again.records == r.records  # determinism

    configs = [r.initial] + [c for _, c in r.virtual_trace]
    created, retired = 1, 0
    for k, (a, after) in enumerate(r.virtual_trace):
        before = configs[k]
        if a.action is Action.ACTIVATE:
            # fresh within its branch: the head state's counter, unused so far
            assert a.item.id == before.head.next_id
            assert all(ic.id < a.item.id for ic in before.head.udc)
        if a.action is Action.APPLY2:
            prev = r.virtual_trace[k - 1][0]
            assert prev.action is Action.APPLY1 and prev.rule == a.rule
            assert prev.keep == a.keep and prev.remove == a.remove
            alive = {ic.id for ic in before.head.udc}
            # no refiring within a branch
            fired = {c.id for c in a.keep + a.remove}
            assert not any(rule == a.rule and set(ids) == fired
                           for rule, ids in before.head.history)
            assert {c.id for c in a.keep + a.remove} <= alive
        if a.action is Action.SPLIT:
            created += a.alternatives - 1
        if a.action is Action.FAIL:
            retired += 1
    finished = len(r.final.solutions) + retired + len(r.final.states)
    assert created == finished
