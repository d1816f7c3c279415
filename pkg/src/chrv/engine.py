"""Small-step interpreter for the refined CHR-or semantics.

A configuration is an ordered list of execution states; transitions act
on the head state only.  The schedule is deterministic: the head state is
inspected top of stack first and exactly one transition fires per step.
Every step yields an :class:`ActionRecord` carrying the dereferenced
snapshots the tracer needs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator

from .compiler import OccurrenceEntry, OccurrenceTable, compile_program, lookup_occurrence
from .store import (
    EMPTY_STORE, BuiltinStore, Entailment, IdentifiedConstraint, UdcStore,
    check_guard, deref, deref_constraint, make_rank, match_head,
    instantiate_constraint, tell_touched, wake,
)
from .syntax import (
    Compound, Constraint, GlobalVar, Goal, Kind, LocalVar, Program, Term,
    constraint_term, term_vars,
)

__all__ = [
    "GoalRDC", "GoalBIC", "Disjunction", "Identified", "Active",
    "ExecutionState", "Configuration", "Action", "ActionRecord",
    "Engine", "RunResult", "Mode", "init", "run", "DEFAULT_BUDGET",
    "FRESH_PREFIX", "guard_display", "body_items", "fresh_locals",
]

DEFAULT_BUDGET = 100_000
FRESH_PREFIX = "_G"


# --------------------------------------------------------------------------
# Stack items and states
# --------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class GoalRDC:
    constraint: Constraint


@dataclass(frozen=True, slots=True)
class GoalBIC:
    constraint: Constraint


@dataclass(frozen=True, slots=True)
class Disjunction:
    alternatives: tuple  # tuple of conjunctions (tuples of Constraint)


@dataclass(frozen=True, slots=True)
class Identified:
    item: IdentifiedConstraint
    wake_ref: int


@dataclass(frozen=True, slots=True)
class Active:
    item: IdentifiedConstraint
    occurrence: int
    #: id tuples already tried at this occurrence (guard failed or fired)
    tried: frozenset = frozenset()
    #: candidate selected by the last TryRule, awaiting its guard
    pending: tuple | None = None
    pending_ref: int | None = None


@dataclass(frozen=True)
class ExecutionState:
    stack: tuple = ()
    udc: UdcStore = field(default_factory=UdcStore)
    builtins: BuiltinStore = EMPTY_STORE
    history: frozenset = frozenset()
    next_id: int = 1
    next_var: int = 1
    last_apply: int | None = None

    @property
    def terminal(self) -> bool:
        return not self.stack and self.builtins.consistent


@dataclass(frozen=True)
class Configuration:
    states: tuple = ()
    solutions: tuple = ()

    @property
    def head(self) -> ExecutionState | None:
        return self.states[0] if self.states else None


class Mode(str, enum.Enum):
    FIRST = "first"
    ALL = "all"


class Action(str, enum.Enum):
    SOLVE_WAKE = "SolveWake"
    ACTIVATE = "Activate"
    REACTIVATE = "Reactivate"
    APPLY1 = "Apply1"
    APPLY2 = "Apply2"
    DROP = "Drop"
    DEFAULT = "Default"
    SPLIT = "Split"
    FAIL = "Fail"


@dataclass(frozen=True)
class ActionRecord:
    """One transition plus the snapshots the extractor reads.

    Constraint payloads are dereferenced and free of rule locals, except
    the left-hand sides of ``match`` equations, which are head patterns.
    """
    action: Action
    state_number: int
    constraint: Constraint | None = None
    item: IdentifiedConstraint | None = None
    woken: tuple = ()
    rule: str | None = None
    keep: tuple = ()
    remove: tuple = ()
    guard: tuple = ()
    match: tuple = ()  # tuple of (pattern Term, instance Term)
    body: tuple = ()  # instantiated disjuncts
    ref: int | None = None
    occurrence: int | None = None
    index: int | None = None
    alternatives: int = 0
    guard_verdict: Entailment | None = None


# --------------------------------------------------------------------------
# Helpers shared with the rebuilder
# --------------------------------------------------------------------------

def body_items(conj) -> tuple:
    return tuple(GoalBIC(c) if c.kind is Kind.BIC else GoalRDC(c) for c in conj)


def guard_display(guard, subst, b: BuiltinStore) -> tuple:
    """Guard as shown by TryRule: instantiated, dereferenced, leftover
    locals printed under their own names."""
    out = []
    for g in guard:
        c = deref_constraint(instantiate_constraint(g, subst), b)
        out.append(Constraint(c.functor, tuple(_globalize(a) for a in c.args)))
    return tuple(out)


def _globalize(t: Term) -> Term:
    if isinstance(t, LocalVar):
        return GlobalVar(t.name)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_globalize(a) for a in t.args))
    return t


def fresh_locals(body, subst) -> list[str]:
    """Body locals not bound by the match, in order of first occurrence."""
    acc: dict = {}
    for conj in body:
        for c in conj:
            for a in c.args:
                term_vars(a, acc)
    return [v.name for v in acc if isinstance(v, LocalVar) and v.name not in subst]


def allocate(names: list[str], counter: int, reserved) -> tuple[dict, int]:
    out = {}
    for n in names:
        while f"{FRESH_PREFIX}{counter}" in reserved:
            counter += 1
        out[n] = GlobalVar(f"{FRESH_PREFIX}{counter}")
        counter += 1
    return out, counter


# --------------------------------------------------------------------------
# Engine
# --------------------------------------------------------------------------

def init(goal: Goal) -> Configuration:
    return Configuration((ExecutionState(stack=body_items(goal.constraints)),))


def settle(config: Configuration, mode: Mode = Mode.ALL) -> Configuration:
    """Move terminal head states to the solution list."""
    states, sols = list(config.states), list(config.solutions)
    while states and states[0].terminal:
        if mode is Mode.FIRST and sols:
            break
        sols.append(states.pop(0))
    if states is config.states and len(sols) == len(config.solutions):
        return config
    return Configuration(tuple(states), tuple(sols))


def finished(config: Configuration, mode: Mode) -> bool:
    if not config.states:
        return True
    return mode is Mode.FIRST and bool(config.solutions)


class Engine:
    def __init__(self, program: Program | OccurrenceTable, goal: Goal,
                 mode: Mode | str = Mode.FIRST):
        self.table = program if isinstance(program, OccurrenceTable) else compile_program(program)
        self.goal = goal
        self.mode = Mode(mode)
        self.goal_names = frozenset(goal.variables)
        self.rank = make_rank(goal.variables, FRESH_PREFIX)

    def initial(self) -> Configuration:
        return settle(init(self.goal), self.mode)

    # -- matching -----------------------------------------------------------

    def candidates(self, s: ExecutionState, entry: OccurrenceEntry,
                   active: IdentifiedConstraint) -> Iterator[tuple[tuple, dict]]:
        """Partner matchings: head positions left to right, store ascending id."""
        b = s.builtins
        heads = entry.heads
        first = match_head(entry.pattern, deref_constraint(active.constraint, b), {})
        if first is None:
            return
        others = [k for k in range(len(heads)) if k != entry.position]
        chosen: dict[int, int] = {entry.position: active.id}

        def search(k: int, subst: dict):
            if k == len(others):
                yield tuple(chosen[p] for p in range(len(heads))), subst
                return
            pos = others[k]
            h = heads[pos]
            used = set(chosen.values())
            for ic in s.udc.by_key(h.functor, h.arity):
                if ic.id in used:
                    continue
                sub = match_head(h, deref_constraint(ic.constraint, b), subst)
                if sub is None:
                    continue
                chosen[pos] = ic.id
                yield from search(k + 1, sub)
                del chosen[pos]

        yield from search(0, first)

    def match_ids(self, s: ExecutionState, entry: OccurrenceEntry, ids: tuple) -> dict | None:
        subst: dict = {}
        for h, i in zip(entry.heads, ids):
            ic = s.udc.get(i)
            if ic is None:
                return None
            subst = match_head(h, deref_constraint(ic.constraint, s.builtins), subst)
            if subst is None:
                return None
        return subst

    def instances(self, s: ExecutionState, entry: OccurrenceEntry, ids: tuple):
        b = s.builtins
        insts = [IdentifiedConstraint(deref_constraint(s.udc.get(i).constraint, b), i)
                 for i in ids]
        nk = len(entry.keep_patterns)
        return tuple(insts[:nk]), tuple(insts[nk:])

    # -- transitions --------------------------------------------------------

    def step(self, config: Configuration, chrono: int):
        """Fire one transition on the head state; None when finished."""
        if finished(config, self.mode):
            return None
        s = config.head
        rest = config.states[1:]

        def done(record, new_states):
            return record, settle(Configuration(tuple(new_states) + rest, config.solutions),
                                  self.mode)

        if not s.builtins.consistent:
            return done(ActionRecord(Action.FAIL, s.next_id, ref=s.last_apply), ())

        top, below = s.stack[0], s.stack[1:]
        b = s.builtins

        if isinstance(top, Disjunction):
            new = [replace(s, stack=body_items(alt) + below) for alt in top.alternatives]
            return done(ActionRecord(Action.SPLIT, s.next_id, ref=s.last_apply,
                                     alternatives=len(top.alternatives)), new)

        if isinstance(top, GoalBIC):
            c = top.constraint
            nb, touched = tell_touched(c, b, self.rank)
            woken = wake(touched, b, s.udc)
            shown = tuple(IdentifiedConstraint(deref_constraint(ic.constraint, b), ic.id)
                          for ic in woken)
            pushed = tuple(Identified(ic, chrono) for ic in woken)
            ns = replace(s, stack=pushed + below, builtins=nb)
            return done(ActionRecord(Action.SOLVE_WAKE, ns.next_id,
                                     constraint=deref_constraint(c, b), woken=shown), (ns,))

        if isinstance(top, GoalRDC):
            ic = IdentifiedConstraint(deref_constraint(top.constraint, b), s.next_id)
            ns = replace(s, stack=(Active(ic, 1),) + below, udc=s.udc.add(ic),
                         next_id=s.next_id + 1)
            return done(ActionRecord(Action.ACTIVATE, ns.next_id, item=ic), (ns,))

        if isinstance(top, Identified):
            ic = s.udc.get(top.item.id)
            shown = IdentifiedConstraint(deref_constraint(top.item.constraint, b), top.item.id)
            if ic is None:
                ns = replace(s, stack=below)
                return done(ActionRecord(Action.DROP, ns.next_id, item=shown), (ns,))
            ns = replace(s, stack=(Active(ic, 1),) + below)
            return done(ActionRecord(Action.REACTIVATE, ns.next_id, item=shown,
                                     ref=top.wake_ref), (ns,))

        assert isinstance(top, Active)
        return done(*self._active(s, top, below, chrono))

    def _active(self, s: ExecutionState, top: Active, below: tuple, chrono: int):
        b = s.builtins
        ic = top.item
        shown = IdentifiedConstraint(deref_constraint(ic.constraint, b), ic.id)
        c = ic.constraint
        entry = lookup_occurrence(self.table, c.functor, c.arity, top.occurrence)
        if entry is None or not s.udc.alive(ic.id):
            ns = replace(s, stack=below)
            return ActionRecord(Action.DROP, ns.next_id, item=shown,
                                occurrence=top.occurrence), (ns,)

        verdict = None
        if top.pending is not None:
            subst = self.match_ids(s, entry, top.pending)
            verdict, gsub = check_guard(b, entry.guard, subst)
            if verdict is Entailment.HOLDS:
                return self._apply(s, top, below, entry, gsub, chrono)

        for ids, subst in self.candidates(s, entry, ic):
            if ids in top.tried or (entry.rule_name, ids) in s.history:
                continue
            keep, remove = self.instances(s, entry, ids)
            item = replace(top, tried=top.tried | {ids}, pending=ids, pending_ref=chrono)
            ns = replace(s, stack=(item,) + below)
            return ActionRecord(
                Action.APPLY1, ns.next_id, item=shown, rule=entry.rule_name,
                keep=keep, remove=remove, guard=guard_display(entry.guard, subst, b),
                occurrence=top.occurrence, guard_verdict=verdict), (ns,)

        item = Active(ic, top.occurrence + 1)
        ns = replace(s, stack=(item,) + below)
        return ActionRecord(Action.DEFAULT, ns.next_id, item=shown,
                            occurrence=top.occurrence, index=top.occurrence + 1,
                            guard_verdict=verdict), (ns,)

    def _apply(self, s, top: Active, below, entry: OccurrenceEntry, gsub: dict, chrono: int):
        b = s.builtins
        ids = top.pending
        keep, remove = self.instances(s, entry, ids)
        head_sub = self.match_ids(s, entry, ids)
        match = [(constraint_term(h), constraint_term(inst.constraint))
                 for h, inst in zip(entry.heads, keep + remove)]
        match += [(LocalVar(n), gsub[n]) for n in gsub if n not in head_sub]
        fresh, counter = allocate(fresh_locals(entry.body, gsub), s.next_var, self.goal_names)
        match += [(LocalVar(n), v) for n, v in fresh.items()]
        e = {**gsub, **fresh}
        body = tuple(tuple(instantiate_constraint(c, e) for c in conj) for conj in entry.body)
        pushed = body_items(body[0]) if len(body) == 1 else (Disjunction(body),)
        if not entry.active_in_remove:
            pushed += (replace(top, pending=None, pending_ref=None),)
        ns = replace(
            s, stack=pushed + below, udc=s.udc.remove(i.id for i in remove),
            history=s.history | {(entry.rule_name, ids)}, next_var=counter,
            last_apply=chrono)
        shown = IdentifiedConstraint(deref_constraint(top.item.constraint, b), top.item.id)
        return ActionRecord(
            Action.APPLY2, ns.next_id, item=shown, rule=entry.rule_name,
            keep=keep, remove=remove, match=tuple(match), body=body,
            ref=top.pending_ref, occurrence=top.occurrence,
            alternatives=len(body)), (ns,)

    # -- driver ---------------------------------------------------------------

    def steps(self, config: Configuration | None = None, budget: int = DEFAULT_BUDGET):
        """Yield (chrono, record, configuration) until finished or out of budget."""
        config = self.initial() if config is None else config
        for chrono in range(budget):
            out = self.step(config, chrono)
            if out is None:
                return
            record, config = out
            yield chrono, record, config


@dataclass
class RunResult:
    solutions: tuple
    virtual_trace: list  # list of (ActionRecord, Configuration)
    initial: Configuration
    final: Configuration
    truncated: bool
    engine: Engine

    @property
    def records(self) -> list:
        return [r for r, _ in self.virtual_trace]


def run(program: Program | OccurrenceTable, goal: Goal, mode: Mode | str = Mode.FIRST,
        budget: int = DEFAULT_BUDGET, keep_configs: bool = True) -> RunResult:
    eng = Engine(program, goal, mode)
    start = config = eng.initial()
    vt = []
    for _, record, config in eng.steps(start, budget):
        vt.append((record, config if keep_configs else None))
    truncated = not finished(config, eng.mode)
    return RunResult(config.solutions, vt, start, config, truncated, eng)
