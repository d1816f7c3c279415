"""Occurrence compilation.

Each head constraint of the program gets an occurrence number per
functor/arity: rules are visited top-down, and within a rule the remove
head is numbered (left to right) before the keep head.  The table drives
the Active constraint's walk through Default / Drop / TryRule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    Constraint, Kind, Program, Rule, format_constraint, format_term,
)

__all__ = [
    "CompileError", "OccurrenceEntry", "OccurrenceTable",
    "compile_program", "lookup_occurrence", "format_table",
]


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class OccurrenceEntry:
    functor: str
    arity: int
    index: int
    rule_name: str
    head_args: tuple
    keep_patterns: tuple
    remove_patterns: tuple
    guard: tuple
    body: tuple
    active_in_remove: bool
    #: position of this head in ``keep_patterns + remove_patterns``
    position: int

    @property
    def heads(self) -> tuple:
        return self.keep_patterns + self.remove_patterns

    @property
    def pattern(self) -> Constraint:
        return self.heads[self.position]


@dataclass(frozen=True)
class OccurrenceTable:
    entries: dict = field(default_factory=dict)  # (functor, arity) -> tuple of entries
    program: Program = field(default_factory=Program)

    def max_index(self, functor: str, arity: int) -> int:
        return len(self.entries.get((functor, arity), ()))

    def rule(self, name: str) -> Rule:
        return self.program.rule(name)

    def __iter__(self):
        for key in self.entries:
            yield from self.entries[key]


_ALLOWED_BODY_BICS = frozenset({"=", "false"})


def _check_rule(r: Rule) -> None:
    if not r.keep and not r.remove:
        raise CompileError(f"rule {r.name}: empty head")
    for h in r.heads:
        if h.kind is Kind.BIC:
            raise CompileError(
                f"rule {r.name}: built-in {format_constraint(h, True)} in head")
    for g in r.guard:
        if g.kind is not Kind.BIC:
            raise CompileError(
                f"rule {r.name}: guard constraint {format_constraint(g, True)} is not built-in")
    for conj in r.body:
        for c in conj:
            if c.kind is Kind.BIC and c.functor not in _ALLOWED_BODY_BICS:
                raise CompileError(
                    f"rule {r.name}: {c.functor!r} is only allowed in guards")


def compile_program(p: Program) -> OccurrenceTable:
    entries: dict[tuple[str, int], list[OccurrenceEntry]] = {}
    names: set[str] = set()
    for r in p.rules:
        if r.name in names:
            raise CompileError(f"duplicate rule name {r.name!r}")
        names.add(r.name)
        _check_rule(r)
        nkeep = len(r.keep)
        order = [(nkeep + k, h, True) for k, h in enumerate(r.remove)]
        order += [(k, h, False) for k, h in enumerate(r.keep)]
        for pos, h, in_remove in order:
            bucket = entries.setdefault(h.key, [])
            bucket.append(OccurrenceEntry(
                functor=h.functor, arity=h.arity, index=len(bucket) + 1,
                rule_name=r.name, head_args=h.args,
                keep_patterns=r.keep, remove_patterns=r.remove,
                guard=r.guard, body=r.body,
                active_in_remove=in_remove, position=pos))
    return OccurrenceTable({k: tuple(v) for k, v in entries.items()}, p)


def lookup_occurrence(t: OccurrenceTable, functor: str, arity: int,
                      j: int) -> OccurrenceEntry | None:
    bucket = t.entries.get((functor, arity), ())
    if 1 <= j <= len(bucket):
        return bucket[j - 1]
    return None


def _list(items, fmt) -> str:
    return "[" + ",".join(fmt(i) for i in items) + "]"


def format_table(t: OccurrenceTable) -> str:
    """Dump as ``rule(Op,Ind,Name,Args,Remove,Keep,Guard,Body).`` lines."""
    def con(c):
        return format_constraint(c, allow_locals=True)

    def conj(cs):
        return ",".join(con(c) for c in cs) if cs else "true"

    lines = []
    for e in t:
        args = _list(e.head_args, lambda a: format_term(a, allow_locals=True))
        if len(e.body) == 1:
            body = _list(e.body[0], con) if e.body[0] else "[true]"
        else:
            body = "[(" + ";".join(f"({conj(d)})" for d in e.body) + ")]"
        lines.append(
            f"rule({e.functor},{e.index},{e.rule_name},{args},"
            f"{_list(e.remove_patterns, con)},{_list(e.keep_patterns, con)},"
            f"{_list(e.guard, con)},{body}).")
    return "\n".join(lines) + ("\n" if lines else "")
