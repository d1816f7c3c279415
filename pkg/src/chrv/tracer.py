"""Generic trace events: extraction from engine actions, serialization, parsing.

Wire format, one event per line::

    [<chrono>,<Port>,<attributes...>,<state number>]

Constraint representations are ``[p,t1,...,tm]`` with an identifier
appended for identified constraints and the occurrence number appended
after it on Default events.  Keyed lists look like ``[keep,[c1,c2]]``
(nested) or ``[addrdc,c1,c2]`` (flat); the parser accepts either form and
remembers which one it saw so that re-serialization is byte-exact.
"""

from __future__ import annotations

import enum
import io
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, TextIO

from .engine import Action, ActionRecord
from .store import IdentifiedConstraint
from .syntax import (
    Constraint, GlobalVar, Kind, LocalVar, ParseError, Parser, Term, format_term,
)

__all__ = [
    "Port", "CRepr", "Equation", "KeyedList", "TraceEvent", "TraceError",
    "extract", "extract_all", "serialize_event", "parse_event", "read_trace",
    "iter_trace", "write_trace", "validate", "filter_events", "drop_defaults",
    "REF_TARGETS", "SCHEDULE", "check_shape",
]


class Port(str, enum.Enum):
    WAKE = "Wake"
    ACTIVATE = "ActivateRDC"
    REACTIVATE = "ReactivateRDC"
    TRY = "TryRule"
    APPLY = "ApplyRule"
    DROP = "Drop"
    DEFAULT = "Default"
    SPLIT = "Split"
    FAIL = "Fail"


_PORT_ALIASES = {p.value: p for p in Port}
_PORT_ALIASES["Reactivate"] = Port.REACTIVATE

#: Port a ref must point at, per referring port.
REF_TARGETS = {
    Port.APPLY: Port.TRY,
    Port.REACTIVATE: Port.WAKE,
    Port.SPLIT: Port.APPLY,
    Port.FAIL: Port.APPLY,
}


#: Optional attributes carried by each port, in serialization order.
SCHEDULE = {
    Port.WAKE: ("cons", "woken"),
    Port.ACTIVATE: ("cinst",),
    Port.REACTIVATE: ("cinst", "ref"),
    Port.TRY: ("rule", "cinst", "keep", "remove", "guard"),
    Port.APPLY: ("ref", "addrdc", "addbic", "keep", "remove", "match", "cinst"),
    Port.DROP: ("cinst",),
    Port.DEFAULT: ("cinst", "index"),
    Port.SPLIT: ("ref",),
    Port.FAIL: ("ref",),
}
_ATTRS = ("rule", "ref", "cons", "cinst", "index", "woken", "addrdc", "addbic",
          "keep", "remove", "guard", "match")
_OPTIONAL = {(Port.FAIL, "ref")}


@dataclass(frozen=True, slots=True)
class CRepr:
    functor: str
    args: tuple = ()
    id: int | None = None
    occ: int | None = None

    @property
    def constraint(self) -> Constraint:
        return Constraint(self.functor, self.args)

    @classmethod
    def of(cls, c: Constraint | IdentifiedConstraint, occ: int | None = None) -> "CRepr":
        if isinstance(c, IdentifiedConstraint):
            return cls(c.constraint.functor, c.constraint.args, c.id, occ)
        return cls(c.functor, c.args)

    def __str__(self) -> str:
        parts = [self.functor] + [format_term(a) for a in self.args]
        if self.id is not None:
            parts.append(str(self.id))
        if self.occ is not None:
            parts.append(str(self.occ))
        return "[" + ",".join(parts) + "]"


@dataclass(frozen=True, slots=True)
class Equation:
    """``pattern=instance``; the left side may hold rule locals."""
    lhs: Term
    rhs: Term

    def __str__(self) -> str:
        return f"[{format_term(self.lhs, allow_locals=True)}={format_term(self.rhs)}]"


@dataclass(frozen=True)
class KeyedList:
    items: tuple = ()
    nested: bool = field(default=True, compare=False)

    def render(self, key: str) -> str:
        inner = ",".join(str(i) for i in self.items)
        if self.nested:
            return f"[{key},[{inner}]]"
        return f"[{key},{inner}]" if self.items else f"[{key}]"

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)


_NESTED_KEYS = frozenset({"woken", "keep", "remove", "guard"})


def _klist(items, key: str) -> KeyedList:
    return KeyedList(tuple(items), key in _NESTED_KEYS)


@dataclass(frozen=True)
class TraceEvent:
    chrono: int
    port: Port
    state: int
    rule: str | None = None
    ref: int | None = None
    cons: CRepr | None = None
    cinst: CRepr | None = None
    index: int | None = None
    woken: KeyedList | None = None
    addrdc: KeyedList | None = None
    addbic: KeyedList | None = None
    keep: KeyedList | None = None
    remove: KeyedList | None = None
    guard: KeyedList | None = None
    match: KeyedList | None = None
    #: port name as written in the source line (e.g. the "Reactivate" alias)
    spelling: str | None = field(default=None, compare=False)

    def __str__(self) -> str:
        return serialize_event(self)


class TraceError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# --------------------------------------------------------------------------
# Extraction
# --------------------------------------------------------------------------

def extract(record: ActionRecord, chrono: int) -> TraceEvent:
    """Map one engine action to its trace event."""
    a = record.action
    n = record.state_number
    if a is Action.SOLVE_WAKE:
        return TraceEvent(chrono, Port.WAKE, n, cons=CRepr.of(record.constraint),
                          woken=_klist(map(CRepr.of, record.woken), "woken"))
    if a is Action.ACTIVATE:
        return TraceEvent(chrono, Port.ACTIVATE, n, cinst=CRepr.of(record.item))
    if a is Action.REACTIVATE:
        return TraceEvent(chrono, Port.REACTIVATE, n, cinst=CRepr.of(record.item),
                          ref=record.ref)
    if a is Action.APPLY1:
        return TraceEvent(
            chrono, Port.TRY, n, rule=record.rule, cinst=CRepr.of(record.item),
            keep=_klist(map(CRepr.of, record.keep), "keep"),
            remove=_klist(map(CRepr.of, record.remove), "remove"),
            guard=_klist(map(CRepr.of, record.guard), "guard"))
    if a is Action.APPLY2:
        added = [c for conj in record.body for c in conj]
        return TraceEvent(
            chrono, Port.APPLY, n, ref=record.ref,
            addrdc=_klist((CRepr.of(c) for c in added if c.kind is Kind.RDC), "addrdc"),
            addbic=_klist((CRepr.of(c) for c in added if c.kind is Kind.BIC), "addbic"),
            keep=_klist(map(CRepr.of, record.keep), "keep"),
            remove=_klist(map(CRepr.of, record.remove), "remove"),
            match=_klist((Equation(l, r) for l, r in record.match), "match"),
            cinst=CRepr.of(record.item))
    if a is Action.DROP:
        return TraceEvent(chrono, Port.DROP, n, cinst=CRepr.of(record.item))
    if a is Action.DEFAULT:
        return TraceEvent(chrono, Port.DEFAULT, n,
                          cinst=CRepr.of(record.item, record.occurrence),
                          index=record.index)
    if a is Action.SPLIT:
        return TraceEvent(chrono, Port.SPLIT, n, ref=record.ref)
    if a is Action.FAIL:
        return TraceEvent(chrono, Port.FAIL, n, ref=record.ref)
    raise ValueError(f"unknown action {a}")


def extract_all(records: Iterable[ActionRecord]) -> list[TraceEvent]:
    events = [extract(r, k) for k, r in enumerate(records)]
    validate(events)
    return events


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def serialize_event(e: TraceEvent) -> str:
    parts = [str(e.chrono), e.spelling or e.port.value]
    p = e.port
    if p is Port.WAKE:
        parts += [str(e.cons), e.woken.render("woken")]
    elif p in (Port.ACTIVATE, Port.DROP):
        parts.append(str(e.cinst))
    elif p is Port.REACTIVATE:
        parts += [str(e.cinst), f"@{e.ref}"]
    elif p is Port.TRY:
        parts += [f"{e.rule}@", str(e.cinst), e.keep.render("keep"),
                  e.remove.render("remove"), e.guard.render("guard")]
    elif p is Port.APPLY:
        parts += [f"@{e.ref}", e.addrdc.render("addrdc"), e.addbic.render("addbic"),
                  e.keep.render("keep"), e.remove.render("remove"),
                  e.match.render("match"), str(e.cinst)]
    elif p is Port.DEFAULT:
        parts += [str(e.cinst), str(e.index)]
    elif p is Port.SPLIT:
        parts.append(f"@{e.ref}")
    elif p is Port.FAIL:
        if e.ref is not None:
            parts.append(f"@{e.ref}")
    parts.append(str(e.state))
    return "[" + ",".join(parts) + "]"


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_PREFIX = re.compile(r"^\s*GT:\s*")
_FUNCTOR_PUNCT = frozenset({"=", "<", ">", ">=", "=<"})


class _EventParser(Parser):
    def __init__(self, text: str):
        super().__init__(text, GlobalVar, anonymous="keep")

    def fail(self, production: str):
        raise self.error("malformed event", [production])

    def comma(self):
        self.expect(",")

    def integer(self, what: str = "integer") -> int:
        neg = self.accept("-")
        t = self.expect_kind("INT", what)
        return -int(t.text) if neg else int(t.text)

    def ref(self) -> int:
        self.expect("@")
        return self.integer("chrono reference")

    def functor(self) -> str:
        t = self.tok
        if t.kind == "ATOM" or (t.kind == "PUNCT" and t.text in _FUNCTOR_PUNCT):
            self.advance()
            return t.text
        self.fail("predicate name")

    def crepr(self, ids: int) -> CRepr:
        """``[p,t1,...,tm]`` followed by ``ids`` trailing integers."""
        self.expect("[")
        f = self.functor()
        elems: list[Term] = []
        while self.accept(","):
            elems.append(self.expr())
        self.expect("]")
        if len(elems) < ids:
            self.fail("constraint identifier")
        tail = elems[len(elems) - ids:] if ids else []
        nums = []
        for t in tail:
            if not (hasattr(t, "value") and isinstance(t.value, int)):
                self.fail("constraint identifier")
            nums.append(t.value)
        args = tuple(elems[:len(elems) - ids])
        return CRepr(f, args, nums[0] if ids >= 1 else None, nums[1] if ids >= 2 else None)

    def equation(self) -> Equation:
        self.expect("[")
        self.var_kind = LocalVar
        lhs = self.expr()
        self.var_kind = GlobalVar
        self.expect("=")
        rhs = self.expr()
        self.expect("]")
        return Equation(lhs, rhs)

    def keyed(self, key: str, item: Callable) -> KeyedList:
        self.expect("[")
        t = self.tok
        if t.kind != "ATOM" or t.text != key:
            self.fail(f"'{key}' list")
        self.advance()
        if self.at("]"):
            self.advance()
            return KeyedList((), False)
        self.comma()
        nested = self.at("[") and self.peek().kind == "PUNCT" and self.peek().text in ("[", "]")
        items = []
        if nested:
            self.advance()
            if not self.at("]"):
                items.append(item())
                while self.accept(","):
                    items.append(item())
            self.expect("]")
        else:
            items.append(item())
            while self.accept(","):
                items.append(item())
        self.expect("]")
        return KeyedList(tuple(items), nested)

    def event(self) -> TraceEvent:
        self.expect("[")
        chrono = self.integer("chrono")
        self.comma()
        t = self.tok
        if t.kind not in ("VAR", "ATOM") or t.text not in _PORT_ALIASES:
            self.fail("port name")
        self.advance()
        port = _PORT_ALIASES[t.text]
        spelling = t.text if t.text != port.value else None
        self.comma()
        f: dict = {}
        ided = lambda: self.crepr(1)  # noqa: E731
        plain = lambda: self.crepr(0)  # noqa: E731
        if port is Port.WAKE:
            f["cons"] = plain(); self.comma()
            f["woken"] = self.keyed("woken", ided); self.comma()
        elif port in (Port.ACTIVATE, Port.DROP):
            f["cinst"] = ided(); self.comma()
        elif port is Port.REACTIVATE:
            f["cinst"] = ided(); self.comma()
            f["ref"] = self.ref(); self.comma()
        elif port is Port.TRY:
            name = self.expect_kind("ATOM", "rule name").text
            self.expect("@"); self.comma()
            f["rule"] = name
            f["cinst"] = ided(); self.comma()
            f["keep"] = self.keyed("keep", ided); self.comma()
            f["remove"] = self.keyed("remove", ided); self.comma()
            f["guard"] = self.keyed("guard", plain); self.comma()
        elif port is Port.APPLY:
            f["ref"] = self.ref(); self.comma()
            f["addrdc"] = self.keyed("addrdc", plain); self.comma()
            f["addbic"] = self.keyed("addbic", plain); self.comma()
            f["keep"] = self.keyed("keep", ided); self.comma()
            f["remove"] = self.keyed("remove", ided); self.comma()
            f["match"] = self.keyed("match", self.equation); self.comma()
            f["cinst"] = ided(); self.comma()
        elif port is Port.DEFAULT:
            f["cinst"] = self.crepr(2); self.comma()
            f["index"] = self.integer("occurrence index"); self.comma()
        elif port is Port.SPLIT:
            f["ref"] = self.ref(); self.comma()
        elif port is Port.FAIL:
            if self.at("@"):
                f["ref"] = self.ref(); self.comma()
        state = self.integer("state number")
        self.expect("]")
        if not self.at_eof():
            self.fail("end of event")
        return TraceEvent(chrono, port, state, spelling=spelling, **f)


def parse_event(line: str, lineno: int | None = None) -> TraceEvent:
    text = _PREFIX.sub("", line, count=1)
    try:
        return _EventParser(text).event()
    except ParseError as exc:
        raise TraceError(str(exc), lineno) from None


def iter_trace(stream: TextIO | Iterable[str], check: bool = True) -> Iterator[TraceEvent]:
    """Stream events, validating chrono density and ref targets on the fly."""
    ports: list[Port] = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        e = parse_event(line, lineno)
        if check:
            _check_one(e, ports, lineno)
        ports.append(e.port)
        yield e


def read_trace(stream: TextIO | Iterable[str] | str, check: bool = True) -> list[TraceEvent]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    return list(iter_trace(stream, check))


def write_trace(events: Iterable[TraceEvent], stream: TextIO) -> int:
    n = 0
    for e in events:
        stream.write(serialize_event(e))
        stream.write("\n")
        n += 1
    return n


def check_shape(e: TraceEvent) -> None:
    """Raise TraceError unless ``e`` carries exactly its port's attributes."""
    want = SCHEDULE[e.port]
    for a in _ATTRS:
        present = getattr(e, a) is not None
        if a in want and not present and (e.port, a) not in _OPTIONAL:
            raise TraceError(f"event {e.chrono}: {e.port.value} requires {a}")
        if present and a not in want:
            raise TraceError(f"event {e.chrono}: {e.port.value} cannot carry {a}")
    ided = {"cinst", "woken", "keep", "remove"}
    for a in ided & set(want):
        v = getattr(e, a)
        for c in ([v] if isinstance(v, CRepr) else (v or ())):
            if c.id is None:
                raise TraceError(f"event {e.chrono}: {a} entry without identifier")
    if e.cinst is not None and (e.cinst.occ is not None) != (e.port is Port.DEFAULT):
        raise TraceError(f"event {e.chrono}: occurrence index only belongs to Default")


def _check_one(e: TraceEvent, ports: list, lineno: int | None) -> None:
    if e.chrono != len(ports):
        raise TraceError(f"chrono {e.chrono} out of sequence (expected {len(ports)})", lineno)
    target = REF_TARGETS.get(e.port)
    if e.ref is not None:
        if target is None:
            raise TraceError(f"{e.port.value} cannot carry a reference", lineno)
        if not 0 <= e.ref < e.chrono:
            raise TraceError(f"dangling reference @{e.ref}", lineno)
        if ports[e.ref] is not target:
            raise TraceError(
                f"reference @{e.ref} points at {ports[e.ref].value}, expected {target.value}",
                lineno)
    elif target is not None and e.port is not Port.FAIL:
        raise TraceError(f"{e.port.value} requires a reference", lineno)


def validate(events: Iterable[TraceEvent]) -> None:
    """Check chrono density and ref-port typing; raise TraceError on violation."""
    ports: list[Port] = []
    for k, e in enumerate(events, 1):
        _check_one(e, ports, k)
        ports.append(e.port)


def filter_events(events: Iterable[TraceEvent],
                  keep: Callable[[TraceEvent], bool]) -> list[TraceEvent]:
    """Select events, renumbering chronos densely and remapping refs."""
    remap: dict[int, int] = {}
    out = []
    for e in events:
        if not keep(e):
            continue
        ref = e.ref
        if ref is not None:
            if ref not in remap:
                raise TraceError(f"event {e.chrono} refers to dropped event {ref}")
            ref = remap[ref]
        remap[e.chrono] = len(out)
        out.append(replace(e, chrono=len(out), ref=ref))
    return out


def drop_defaults(events: Iterable[TraceEvent]) -> list[TraceEvent]:
    return filter_events(events, lambda e: e.port is not Port.DEFAULT)
