"""Single-event SQL subset over generic traces.

::

    SELECT * | field[, field...] FROM trace [WHERE predicate]

Predicates combine ``field = 'literal'`` / ``field != 'literal'`` with
AND, OR and parentheses.  A field's value is its canonical serialized
text; comparisons against a field the event does not carry are false.
Evaluation is a single forward pass over fixed-size batches, with the
predicate evaluated column-wise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import islice
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .tracer import Port, TraceEvent, serialize_event

__all__ = [
    "FIELDS", "QueryError", "Comparison", "And", "Or", "Query",
    "parse_query", "parse_predicate", "eval_query", "count_query",
    "matching", "field_value", "format_row", "EventTable",
]


class QueryError(ValueError):
    pass


def _render(key: str) -> Callable[[TraceEvent], str | None]:
    def get(e: TraceEvent):
        v = getattr(e, key)
        return None if v is None else v.render(key)
    return get


def _text(attr: str) -> Callable[[TraceEvent], str | None]:
    def get(e: TraceEvent):
        v = getattr(e, attr)
        return None if v is None else str(v)
    return get


#: field name -> accessor giving the canonical text or None when absent.
#: ``name`` on an ApplyRule is resolved through its TryRule reference
#: (see ``_NameTracker``); these accessors cover the event-local part.
FIELDS: dict[str, Callable[[TraceEvent], str | None]] = {
    "chrono": lambda e: str(e.chrono),
    "type": lambda e: e.port.value,
    "name": lambda e: None if e.rule is None else e.rule + "@",
    "ref": lambda e: None if e.ref is None else f"@{e.ref}",
    "cinst": _text("cinst"),
    "cons": _text("cons"),
    "woken": _render("woken"),
    "addrdc": _render("addrdc"),
    "addbic": _render("addbic"),
    "keep": _render("keep"),
    "remove": _render("remove"),
    "guard": _render("guard"),
    "match": _render("match"),
    "index": _text("index"),
    "state": lambda e: str(e.state),
}


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    field: str
    op: str  # "=" or "!="
    value: str


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


Predicate = Union[Comparison, And, Or, None]


@dataclass(frozen=True)
class Query:
    projection: tuple | None  # None means *
    predicate: Predicate = None

    def fields_used(self) -> set[str]:
        out = set(self.projection or ())
        stack = [self.predicate]
        while stack:
            p = stack.pop()
            if isinstance(p, Comparison):
                out.add(p.field)
            elif isinstance(p, (And, Or)):
                stack.extend(p.parts)
        return out


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<str>'(?:[^']|'')*')
    | (?P<int>-?\d+)
    | (?P<op>!=|<>|=|\(|\)|,|\*)
    | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    )""", re.VERBOSE)

_KEYWORDS = {"select", "from", "where", "and", "or"}


def _tokens(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    text = text.rstrip().rstrip(";")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise QueryError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        val, start = m.group(kind), m.start(kind)
        if kind == "word" and val.lower() in _KEYWORDS:
            kind, val = "kw", val.lower()
        out.append((kind, val, start))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        if t[0] != "eof":
            self.i += 1
        return t

    def error(self, expected: str):
        kind, val, pos = self.peek()
        found = val if kind != "eof" else "end of query"
        return QueryError(f"expected {expected} at offset {pos}, found {found!r}")

    def kw(self, word: str) -> bool:
        if self.peek()[:2] == ("kw", word):
            self.take()
            return True
        return False

    def expect_kw(self, word: str):
        if not self.kw(word):
            raise self.error(word.upper())

    def op(self, sym: str) -> bool:
        if self.peek()[:2] == ("op", sym):
            self.take()
            return True
        return False

    def field(self) -> str:
        kind, val, _ = self.peek()
        if kind != "word":
            raise self.error("field name")
        self.take()
        name = val.lower()
        if name not in FIELDS:
            raise QueryError(f"unknown field {val!r} (known: {', '.join(FIELDS)})")
        return name

    def query(self) -> Query:
        self.expect_kw("select")
        if self.op("*"):
            proj = None
        else:
            names = [self.field()]
            while self.op(","):
                names.append(self.field())
            proj = tuple(names)
        self.expect_kw("from")
        kind, val, _ = self.peek()
        if kind != "word" or val.lower() != "trace":
            raise self.error("'trace'")
        self.take()
        pred = self.predicate() if self.kw("where") else None
        if self.peek()[0] != "eof":
            raise self.error("end of query")
        return Query(proj, pred)

    def predicate(self):
        parts = [self.conjunction()]
        while self.kw("or"):
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self):
        parts = [self.atom()]
        while self.kw("and"):
            parts.append(self.atom())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def atom(self):
        if self.op("("):
            p = self.predicate()
            if not self.op(")"):
                raise self.error("')'")
            return p
        name = self.field()
        kind, val, _ = self.peek()
        if kind != "op" or val not in ("=", "!=", "<>"):
            raise self.error("'=' or '!='")
        self.take()
        op = "=" if val == "=" else "!="
        kind, val, _ = self.peek()
        if kind == "str":
            lit = val[1:-1].replace("''", "'")
        elif kind == "int":
            lit = str(int(val))
        else:
            raise self.error("quoted literal")
        self.take()
        return Comparison(name, op, lit)


def parse_query(text: str) -> Query:
    return _Parser(text).query()


def parse_predicate(text: str) -> Predicate:
    """Parse a bare WHERE clause (without the SELECT ... FROM part)."""
    p = _Parser(text)
    if p.peek()[0] == "eof":
        return None
    pred = p.predicate()
    if p.peek()[0] != "eof":
        raise p.error("end of predicate")
    return pred


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

BATCH = 65_536


class _NameTracker:
    """Streams rule names, giving ApplyRule events the name of their TryRule."""

    def __init__(self):
        self.tried: dict[int, str] = {}

    def __call__(self, e: TraceEvent) -> str | None:
        if e.port is Port.TRY:
            self.tried[e.chrono] = e.rule
            return e.rule + "@"
        if e.port is Port.APPLY:
            name = self.tried.pop(e.ref, None)
            return None if name is None else name + "@"
        return None


def field_value(e: TraceEvent, name: str) -> str | None:
    """Event-local value of a field (ApplyRule names need the stream)."""
    return FIELDS[name](e)


def _mask(p: Predicate, cols: dict, n: int) -> np.ndarray:
    if p is None:
        return np.ones(n, dtype=bool)
    if isinstance(p, Comparison):
        col = cols[p.field]
        present = np.not_equal(col, None)
        eq = col == p.value
        return (eq if p.op == "=" else ~eq) & present
    masks = [_mask(q, cols, n) for q in p.parts]
    return np.logical_and.reduce(masks) if isinstance(p, And) else np.logical_or.reduce(masks)


def _batches(events: Iterable[TraceEvent], size: int) -> Iterator[list]:
    it = iter(events)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def matching(q: Query, events: Iterable[TraceEvent],
             batch: int = BATCH) -> Iterator[tuple[TraceEvent, dict, int]]:
    """Yield (event, column values for the batch, row) for each selected event."""
    used = q.fields_used()
    tracker = _NameTracker() if "name" in used else None
    for chunk in _batches(events, batch):
        cols = {}
        for f in used:
            getter = tracker if f == "name" else FIELDS[f]
            col = np.empty(len(chunk), dtype=object)
            col[:] = [getter(e) for e in chunk]
            cols[f] = col
        mask = _mask(q.predicate, cols, len(chunk))
        for k in np.flatnonzero(mask):
            yield chunk[k], cols, int(k)


def format_row(q: Query, event: TraceEvent, cols: dict, k: int) -> str:
    if q.projection is None:
        return serialize_event(event)
    vals = [cols[f][k] for f in q.projection]
    return ",".join("" if v is None else v for v in vals)


def eval_query(q: Query | str, events: Iterable[TraceEvent], batch: int = BATCH) -> Iterator[str]:
    """Rows in trace order: full events for ``*``, else comma-joined fields."""
    if isinstance(q, str):
        q = parse_query(q)
    for e, cols, k in matching(q, events, batch):
        yield format_row(q, e, cols, k)


def count_query(q: Query | str, events: Iterable[TraceEvent], batch: int = BATCH) -> int:
    if isinstance(q, str):
        q = parse_query(q)
    used = q.fields_used() - set(q.projection or ())
    q = Query(tuple(sorted(used)) or ("chrono",), q.predicate)
    return sum(1 for _ in matching(q, events, batch))


class EventTable:
    """All field columns of an in-memory trace, for repeated predicates."""

    def __init__(self, events: Sequence[TraceEvent]):
        self.events = events
        tracker = _NameTracker()
        self.columns = {}
        for f, getter in FIELDS.items():
            col = np.empty(len(events), dtype=object)
            col[:] = [(tracker if f == "name" else getter)(e) for e in events]
            self.columns[f] = col

    def __len__(self) -> int:
        return len(self.events)

    def mask(self, predicate: Predicate | str) -> np.ndarray:
        if isinstance(predicate, str):
            predicate = parse_predicate(predicate)
        return _mask(predicate, self.columns, len(self.events))

    def count(self, predicate: Predicate | str) -> int:
        return int(self.mask(predicate).sum())
