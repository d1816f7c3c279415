"""Reconstruction of the virtual trace from the actual trace.

``reconstruct_step`` is the per-event inverse of the extractor: given the
configuration before an event and the trace up to that event, it rebuilds
the successor configuration.  It reads the last event and the events its
ref points at, nothing else (see :class:`TraceView`).  Each attribute of
the event is checked against the state being rebuilt; any mismatch is a
:class:`Divergence`.

``check_faithfulness`` runs the engine, extracts the trace, rebuilds it
and compares the two virtual traces step by step.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

from .compiler import OccurrenceTable, compile_program, lookup_occurrence
from .engine import (
    Action, Active, Configuration, Disjunction, Engine, ExecutionState,
    GoalBIC, GoalRDC, Identified, Mode, allocate, body_items, finished,
    fresh_locals, guard_display, settle, DEFAULT_BUDGET,
)
from .store import (
    Entailment, IdentifiedConstraint, check_guard, deref_constraint,
    instantiate_constraint, match_head, tell_touched, wake,
)
from .syntax import Goal, Kind, LocalVar, Program, constraint_term
from .tracer import CRepr, Port, TraceError, TraceEvent, check_shape, extract

__all__ = [
    "Divergence", "TraceView", "VirtualTrace", "FaithfulnessReport",
    "Rebuilder", "reconstruct_step", "reconstruct", "check_faithfulness",
    "config_digest", "config_diff", "PORT_ACTION",
]

PORT_ACTION = {
    Port.WAKE: Action.SOLVE_WAKE,
    Port.ACTIVATE: Action.ACTIVATE,
    Port.REACTIVATE: Action.REACTIVATE,
    Port.TRY: Action.APPLY1,
    Port.APPLY: Action.APPLY2,
    Port.DROP: Action.DROP,
    Port.DEFAULT: Action.DEFAULT,
    Port.SPLIT: Action.SPLIT,
    Port.FAIL: Action.FAIL,
}


class Divergence(Exception):
    """The event cannot be the image of any transition from the given state."""

    def __init__(self, chrono: int, message: str):
        self.chrono = chrono
        self.message = message
        super().__init__(f"chrono {chrono}: {message}")


class TraceView:
    """Prefix of a trace, logging every event that is read.

    Only events strictly before ``limit`` are visible, so a step cannot
    peek at the future.
    """

    def __init__(self, events: Sequence[TraceEvent], limit: int | None = None):
        self.events = events
        self.limit = len(events) if limit is None else limit
        self.accessed: list[int] = []

    def last(self) -> TraceEvent:
        return self.get(self.limit - 1)

    def get(self, chrono: int) -> TraceEvent:
        if not 0 <= chrono < self.limit:
            raise Divergence(self.limit - 1, f"reference @{chrono} outside the trace prefix")
        self.accessed.append(chrono)
        e = self.events[chrono]
        if e.chrono != chrono:
            raise Divergence(chrono, f"event numbered {e.chrono} at position {chrono}")
        return e


@dataclass
class VirtualTrace:
    initial: Configuration
    steps: list = field(default_factory=list)  # (Action, Configuration)

    @property
    def final(self) -> Configuration:
        return self.steps[-1][1] if self.steps else self.initial


class Rebuilder:
    """The reconstruction function for one (program, goal, mode)."""

    def __init__(self, program: Program | OccurrenceTable, goal: Goal,
                 mode: Mode | str = Mode.FIRST):
        # The engine object supplies matching helpers and the variable order;
        # it is never stepped here.
        self.engine = Engine(program, goal, mode)
        self.table = self.engine.table
        self.mode = self.engine.mode

    def initial(self) -> Configuration:
        return self.engine.initial()

    # -- helpers ------------------------------------------------------------

    @staticmethod
    def _expect(cond: bool, chrono: int, message: str) -> None:
        if not cond:
            raise Divergence(chrono, message)

    def _same(self, got, want, chrono: int, what: str) -> None:
        if got != want:
            raise Divergence(chrono, f"{what}: trace has {got}, state gives {want}")

    def _repr(self, ic: IdentifiedConstraint, s: ExecutionState, occ=None) -> CRepr:
        return CRepr.of(IdentifiedConstraint(deref_constraint(ic.constraint, s.builtins), ic.id), occ)

    def _ids(self, ev: TraceEvent) -> tuple:
        return tuple(c.id for c in ev.keep) + tuple(c.id for c in ev.remove)

    # -- one step -----------------------------------------------------------

    def step(self, config: Configuration, view: TraceView) -> tuple[Action, Configuration]:
        ev = view.last()
        k = ev.chrono
        try:
            check_shape(ev)
        except TraceError as exc:
            raise Divergence(k, str(exc)) from None
        self._expect(k == view.limit - 1, k, f"chrono {k} at position {view.limit - 1}")
        self._expect(not finished(config, self.mode), k, "no transition applies: derivation finished")
        s = config.head
        rest = config.states[1:]
        action = PORT_ACTION[ev.port]

        def done(new_states, n):
            self._same(ev.state, n, k, "state number")
            return action, settle(Configuration(tuple(new_states) + rest, config.solutions),
                                  self.mode)

        if ev.port is Port.FAIL:
            self._expect(not s.builtins.consistent, k, "Fail on a consistent store")
            self._same(ev.ref, s.last_apply, k, "fail cause")
            if ev.ref is not None:
                view.get(ev.ref)
            return done((), s.next_id)

        self._expect(s.builtins.consistent, k, f"{ev.port.value} on an inconsistent store")
        self._expect(bool(s.stack), k, "empty stack")
        top, below = s.stack[0], s.stack[1:]
        b = s.builtins

        if ev.port is Port.SPLIT:
            self._expect(isinstance(top, Disjunction), k, "Split without a disjunction on the stack")
            self._same(ev.ref, s.last_apply, k, "split cause")
            view.get(ev.ref)
            new = [replace(s, stack=body_items(alt) + below) for alt in top.alternatives]
            return done(new, s.next_id)

        if ev.port is Port.WAKE:
            self._expect(isinstance(top, GoalBIC), k, "Wake without a built-in on the stack")
            self._same(ev.cons, CRepr.of(deref_constraint(top.constraint, b)), k, "told constraint")
            nb, touched = tell_touched(ev.cons.constraint, b, self.engine.rank)
            self._same([w.id for w in ev.woken],
                       [ic.id for ic in wake(touched, b, s.udc) if nb.consistent],
                       k, "woken identifiers")
            pushed = []
            for w in ev.woken:
                ic = s.udc.get(w.id) if w.id is not None else None
                self._expect(ic is not None, k, f"woken constraint #{w.id} is not in the store")
                self._same(w, self._repr(ic, s), k, "woken constraint")
                pushed.append(Identified(ic, k))
            ns = replace(s, stack=tuple(pushed) + below, builtins=nb)
            return done((ns,), ns.next_id)

        if ev.port is Port.ACTIVATE:
            self._expect(isinstance(top, GoalRDC), k, "ActivateRDC without a goal constraint")
            self._expect(ev.cinst.occ is None, k, "unexpected occurrence index")
            self._same(ev.cinst.id, s.next_id, k, "new identifier")
            self._same(ev.cinst.constraint, deref_constraint(top.constraint, b), k, "activated constraint")
            ic = IdentifiedConstraint(ev.cinst.constraint, ev.cinst.id)
            ns = replace(s, stack=(Active(ic, 1),) + below, udc=s.udc.add(ic),
                         next_id=ev.cinst.id + 1)
            return done((ns,), ns.next_id)

        if ev.port is Port.REACTIVATE:
            self._expect(isinstance(top, Identified), k, "Reactivate without a woken constraint")
            self._same(ev.ref, top.wake_ref, k, "wake reference")
            wake_ev = view.get(ev.ref)
            self._expect(any(w.id == top.item.id for w in wake_ev.woken), k,
                         f"constraint #{top.item.id} not woken by @{ev.ref}")
            ic = s.udc.get(top.item.id)
            self._expect(ic is not None, k, f"#{top.item.id} is no longer alive")
            self._same(ev.cinst, self._repr(ic, s), k, "reactivated constraint")
            ns = replace(s, stack=(Active(ic, 1),) + below)
            return done((ns,), ns.next_id)

        if ev.port is Port.DROP:
            if isinstance(top, Identified):
                self._expect(not s.udc.alive(top.item.id), k, "Drop of a live woken constraint")
                item = top.item
            else:
                self._expect(isinstance(top, Active), k, "Drop without an active constraint")
                item = top.item
                c = item.constraint
                self._expect(lookup_occurrence(self.table, c.functor, c.arity, top.occurrence) is None
                             or not s.udc.alive(item.id), k,
                             f"Drop at existing occurrence {top.occurrence}")
            self._same(ev.cinst, self._repr(item, s), k, "dropped constraint")
            ns = replace(s, stack=below)
            return done((ns,), ns.next_id)

        self._expect(isinstance(top, Active), k, f"{ev.port.value} without an active constraint")
        ic = top.item
        c = ic.constraint
        entry = lookup_occurrence(self.table, c.functor, c.arity, top.occurrence)
        self._expect(entry is not None and s.udc.alive(ic.id), k,
                     f"no occurrence {top.occurrence} for the active constraint")
        pending_holds = False
        if top.pending is not None:
            subst = self.engine.match_ids(s, entry, top.pending)
            pending_holds = check_guard(b, entry.guard, subst)[0] is Entailment.HOLDS

        if ev.port is Port.DEFAULT:
            self._same(ev.cinst, self._repr(ic, s, top.occurrence), k, "active constraint")
            self._same(ev.index, top.occurrence + 1, k, "next occurrence")
            self._expect(not pending_holds, k, "Default while a tried rule is applicable")
            self._expect(self._first_candidate(s, top, entry) is None, k,
                         "Default while a rule can be tried")
            ns = replace(s, stack=(Active(ic, top.occurrence + 1),) + below)
            return done((ns,), ns.next_id)

        if ev.port is Port.TRY:
            self._same(ev.rule, entry.rule_name, k, "rule name")
            self._same(ev.cinst, self._repr(ic, s), k, "active constraint")
            self._expect(not pending_holds, k, "TryRule while a tried rule is applicable")
            ids = self._ids(ev)
            self._same(ids, self._first_candidate(s, top, entry), k, "partner constraints")
            keep, remove = self.engine.instances(s, entry, ids)
            self._same(tuple(ev.keep), tuple(map(CRepr.of, keep)), k, "keep list")
            self._same(tuple(ev.remove), tuple(map(CRepr.of, remove)), k, "remove list")
            subst = self.engine.match_ids(s, entry, ids)
            self._same(tuple(ev.guard), tuple(map(CRepr.of, guard_display(entry.guard, subst, b))),
                       k, "guard")
            item = replace(top, tried=top.tried | {ids}, pending=ids, pending_ref=k)
            ns = replace(s, stack=(item,) + below)
            return done((ns,), ns.next_id)

        assert ev.port is Port.APPLY
        return done(*self._apply(s, top, below, entry, ev, view))

    def _first_candidate(self, s, top: Active, entry) -> tuple | None:
        for ids, _ in self.engine.candidates(s, entry, top.item):
            if ids not in top.tried and (entry.rule_name, ids) not in s.history:
                return ids
        return None

    def _apply(self, s: ExecutionState, top: Active, below, entry, ev: TraceEvent, view):
        k = ev.chrono
        b = s.builtins
        self._expect(top.pending is not None, k, "ApplyRule without a preceding TryRule")
        self._same(ev.ref, top.pending_ref, k, "TryRule reference")
        tried = view.get(ev.ref)
        self._expect(tried.port is Port.TRY, k, f"@{ev.ref} is not a TryRule")
        name = tried.rule
        try:
            rule = self.table.rule(name)
        except KeyError:
            raise Divergence(k, f"unknown rule {name!r}") from None
        self._same(name, entry.rule_name, k, "rule of the active occurrence")
        self._same(tuple(ev.keep), tuple(tried.keep), k, "keep list vs TryRule")
        self._same(tuple(ev.remove), tuple(tried.remove), k, "remove list vs TryRule")
        self._same(ev.cinst, self._repr(top.item, s), k, "active constraint")
        ids = self._ids(ev)
        self._same(ids, top.pending, k, "matched identifiers")

        # Rebuild the substitution e from the match equations.
        heads = rule.keep + rule.remove
        eqs = list(ev.match)
        self._expect(len(eqs) >= len(heads), k, "match list shorter than the rule head")
        e: dict = {}
        for h, eq, i in zip(heads, eqs, ids):
            self._same(eq.lhs, constraint_term(h), k, "match pattern")
            ic = s.udc.get(i)
            self._expect(ic is not None, k, f"#{i} is not in the store")
            inst = deref_constraint(ic.constraint, b)
            self._same(eq.rhs, constraint_term(inst), k, "match instance")
            e = match_head(h, inst, e)
            self._expect(e is not None, k, f"pattern does not match #{i}")
        head_e = dict(e)
        verdict, gsub = check_guard(b, rule.guard, head_e)
        self._expect(verdict is Entailment.HOLDS, k, "guard does not hold")
        extra = eqs[len(heads):]
        guard_bound = [(n, gsub[n]) for n in gsub if n not in head_e]
        fresh, counter = allocate(fresh_locals(rule.body, gsub), s.next_var,
                                  self.engine.goal_names)
        want = [(LocalVar(n), v) for n, v in guard_bound] + [(LocalVar(n), v) for n, v in fresh.items()]
        self._same([(q.lhs, q.rhs) for q in extra], want, k, "match bindings")
        for q in extra:
            e[q.lhs.name] = q.rhs

        body = tuple(tuple(instantiate_constraint(c, e) for c in conj) for conj in rule.body)
        added = [c for conj in body for c in conj]
        self._same(tuple(ev.addrdc), tuple(CRepr.of(c) for c in added if c.kind is Kind.RDC),
                   k, "added constraints")
        self._same(tuple(ev.addbic), tuple(CRepr.of(c) for c in added if c.kind is Kind.BIC),
                   k, "added built-ins")
        pushed = body_items(body[0]) if len(body) == 1 else (Disjunction(body),)
        if not entry.active_in_remove:
            pushed += (replace(top, pending=None, pending_ref=None),)
        ns = replace(s, stack=pushed + below,
                     udc=s.udc.remove(c.id for c in ev.remove),
                     history=s.history | {(name, ids)}, next_var=counter, last_apply=k)
        return (ns,), ns.next_id


def reconstruct_step(config: Configuration, view: TraceView,
                     rebuilder: Rebuilder) -> tuple[Action, Configuration]:
    return rebuilder.step(config, view)


def reconstruct(trace: Sequence[TraceEvent], goal: Goal, program: Program | OccurrenceTable,
                mode: Mode | str = Mode.FIRST) -> VirtualTrace:
    """Fold the reconstruction over the trace, starting from the goal's initial state."""
    rb = Rebuilder(program, goal, mode)
    vt = VirtualTrace(rb.initial())
    config = vt.initial
    for t in range(1, len(trace) + 1):
        action, config = rb.step(config, TraceView(trace, t))
        vt.steps.append((action, config))
    return vt


# --------------------------------------------------------------------------
# Comparison
# --------------------------------------------------------------------------

def _canon(x) -> str:
    """Order-independent text for hashing configurations."""
    if isinstance(x, (frozenset, set)):
        return "{" + ",".join(sorted(_canon(i) for i in x)) + "}"
    if isinstance(x, dict):
        return "{" + ",".join(sorted(f"{k}:{_canon(v)}" for k, v in x.items())) + "}"
    if isinstance(x, (tuple, list)):
        return "(" + ",".join(_canon(i) for i in x) + ")"
    if hasattr(x, "__dataclass_fields__"):
        return type(x).__name__ + "(" + ",".join(
            f"{f.name}={_canon(getattr(x, f.name))}" for f in fields(x)) + ")"
    return repr(x)


def config_digest(c: Configuration | None) -> str:
    return hashlib.sha256(_canon(c).encode()).hexdigest()[:16]


def config_diff(a, b, path: str = "config") -> str | None:
    """Path and values of the first field where ``a`` and ``b`` differ."""
    if a == b:
        return None
    if type(a) is not type(b):
        return f"{path}: {a!r} != {b!r}"
    if isinstance(a, (tuple, list)):
        for i, (x, y) in enumerate(zip(a, b)):
            d = config_diff(x, y, f"{path}[{i}]")
            if d:
                return d
        return f"{path}: length {len(a)} != {len(b)}"
    if hasattr(a, "__dataclass_fields__"):
        for f in fields(a):
            d = config_diff(getattr(a, f.name), getattr(b, f.name), f"{path}.{f.name}")
            if d:
                return d
    if isinstance(a, (frozenset, set)):
        return f"{path}: only expected {sorted(map(repr, a - b))}, only rebuilt {sorted(map(repr, b - a))}"
    return f"{path}: {a!r} != {b!r}"


@dataclass
class FirstDivergence:
    chrono: int
    expected_digest: str
    rebuilt_digest: str
    diff: str


@dataclass
class FaithfulnessReport:
    ok: bool
    steps: int
    truncated: bool = False
    first_divergence: FirstDivergence | None = None

    def __str__(self) -> str:
        if self.ok:
            extra = " (engine stopped at the step budget)" if self.truncated else ""
            return f"faithful: {self.steps} events rebuilt{extra}"
        d = self.first_divergence
        return (f"divergence at chrono {d.chrono}: expected {d.expected_digest}, "
                f"rebuilt {d.rebuilt_digest}\n  {d.diff}")


def compare(expected: Sequence[tuple], trace: Sequence[TraceEvent], rebuilder: Rebuilder,
            start: Configuration | None = None, offset: int = 0) -> FirstDivergence | None:
    """Rebuild ``trace`` step by step against the engine's virtual trace.

    ``expected[t]`` is the engine's ``(ActionRecord, Configuration)`` for
    chrono ``offset + t``; ``start`` is the configuration before ``offset``.
    """
    config = rebuilder.initial() if start is None else start
    n = max(len(expected), len(trace) - offset)
    for t in range(n):
        chrono = offset + t
        exp = expected[t] if t < len(expected) else None
        exp_cfg = exp[1] if exp else None
        if chrono >= len(trace):
            return FirstDivergence(chrono, config_digest(exp_cfg), config_digest(None),
                                   "trace ends before the derivation")
        try:
            action, config = rebuilder.step(config, TraceView(trace, chrono + 1))
        except Divergence as d:
            return FirstDivergence(d.chrono, config_digest(exp_cfg), config_digest(None),
                                   d.message)
        if exp is None:
            return FirstDivergence(chrono, config_digest(None), config_digest(config),
                                   "trace continues past the end of the derivation")
        if action is not exp[0].action or config != exp_cfg:
            diff = (f"action {action.value} != {exp[0].action.value}"
                    if action is not exp[0].action else config_diff(exp_cfg, config))
            return FirstDivergence(chrono, config_digest(exp_cfg), config_digest(config), diff)
    return None


def check_faithfulness(program: Program | OccurrenceTable, goal: Goal,
                       mode: Mode | str = Mode.FIRST, budget: int = DEFAULT_BUDGET,
                       trace: Sequence[TraceEvent] | None = None) -> FaithfulnessReport:
    """Run the engine, rebuild its trace (or the given one) and compare."""
    eng = Engine(program, goal, mode)
    expected = []
    config = eng.initial()
    events = []
    for chrono, record, config in eng.steps(config, budget):
        expected.append((record, config))
        if trace is None:
            events.append(extract(record, chrono))
    truncated = not finished(config, eng.mode)
    rb = Rebuilder(eng.table, goal, mode)
    div = compare(expected, events if trace is None else trace, rb)
    return FaithfulnessReport(div is None, len(expected), truncated, div)
