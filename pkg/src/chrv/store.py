"""Built-in store, user-defined constraint store, matching and guards.

The built-in store is a normalized (idempotent) substitution over global
variables.  Telling an equation runs syntactic unification with occurs
check; any clash yields the inconsistent store, which keeps the bindings
it had before the failing tell.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .syntax import (
    Compound, Const, Constraint, GlobalVar, LocalVar, Term,
)

__all__ = [
    "BuiltinStore", "IdentifiedConstraint", "UdcStore", "Entailment",
    "deref", "deref_constraint", "tell", "entails", "check_guard",
    "match_head", "instantiate", "instantiate_constraint", "make_rank",
    "term_var_names", "EMPTY_STORE",
]

Rank = Callable[[str], tuple]


@dataclass(frozen=True)
class BuiltinStore:
    bindings: Mapping[str, Term] = field(default_factory=dict)
    consistent: bool = True

    def __hash__(self):
        return hash((tuple(self.bindings.items()), self.consistent))

    def equations(self) -> list[tuple[str, Term]]:
        return list(self.bindings.items())


EMPTY_STORE = BuiltinStore()


@dataclass(frozen=True, slots=True)
class IdentifiedConstraint:
    constraint: Constraint
    id: int


@dataclass(frozen=True)
class UdcStore:
    """Alive identified constraints, kept in ascending id order."""
    items: tuple = ()

    def add(self, ic: IdentifiedConstraint) -> "UdcStore":
        assert not self.items or self.items[-1].id < ic.id
        return UdcStore(self.items + (ic,))

    def remove(self, ids: Iterable[int]) -> "UdcStore":
        gone = set(ids)
        return UdcStore(tuple(ic for ic in self.items if ic.id not in gone))

    def get(self, i: int) -> IdentifiedConstraint | None:
        for ic in self.items:
            if ic.id == i:
                return ic
        return None

    def alive(self, i: int) -> bool:
        return self.get(i) is not None

    def by_key(self, functor: str, arity: int) -> list[IdentifiedConstraint]:
        return [ic for ic in self.items
                if ic.constraint.functor == functor and ic.constraint.arity == arity]

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)


# --------------------------------------------------------------------------
# Substitution helpers
# --------------------------------------------------------------------------

def deref(t: Term, b: BuiltinStore) -> Term:
    """Replace bound globals by their values (one pass suffices: normalized)."""
    if not b.bindings:
        return t
    return _subst(t, b.bindings)


def _subst(t: Term, m: Mapping[str, Term]) -> Term:
    if isinstance(t, GlobalVar):
        return m.get(t.name, t)
    if isinstance(t, Compound):
        args = tuple(_subst(a, m) for a in t.args)
        return t if args == t.args else Compound(t.functor, args)
    return t


def deref_constraint(c: Constraint, b: BuiltinStore) -> Constraint:
    if not b.bindings or not c.args:
        return c
    return Constraint(c.functor, tuple(_subst(a, b.bindings) for a in c.args))


def term_var_names(t: Term, acc: set | None = None) -> set:
    """Names of global variables occurring in ``t``."""
    if acc is None:
        acc = set()
    stack = [t]
    while stack:
        t = stack.pop()
        if isinstance(t, GlobalVar):
            acc.add(t.name)
        elif isinstance(t, Compound):
            stack.extend(t.args)
    return acc


def make_rank(goal_names: Iterable[str], fresh_prefix: str = "_G") -> Rank:
    """Age order for variables: goal variables by first appearance, then
    generated variables by counter.  Larger rank means younger."""
    order = {n: i for i, n in enumerate(goal_names)}
    base = len(order)

    def rank(name: str) -> tuple:
        if name in order:
            return (0, order[name], "")
        if name.startswith(fresh_prefix) and name[len(fresh_prefix):].isdigit():
            return (1, base + int(name[len(fresh_prefix):]), "")
        return (2, 0, name)
    return rank


def _default_rank(name: str) -> tuple:
    return (0, 0, name)


# --------------------------------------------------------------------------
# Tell
# --------------------------------------------------------------------------

def _walk(t: Term, w: dict) -> Term:
    while isinstance(t, GlobalVar) and t.name in w:
        t = w[t.name]
    return t


def _resolve(t: Term, w: dict) -> Term:
    t = _walk(t, w)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_resolve(a, w) for a in t.args))
    return t


def _occurs(name: str, t: Term, w: dict) -> bool:
    stack = [t]
    while stack:
        t = _walk(stack.pop(), w)
        if isinstance(t, GlobalVar):
            if t.name == name:
                return True
        elif isinstance(t, Compound):
            stack.extend(t.args)
    return False


def _unify(a: Term, b: Term, w: dict, touched: set, rank: Rank) -> bool:
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x, y = _walk(x, w), _walk(y, w)
        if x == y:
            continue
        if isinstance(x, LocalVar) or isinstance(y, LocalVar):
            raise ValueError("local variable reached the built-in store")
        if isinstance(x, GlobalVar) and isinstance(y, GlobalVar):
            young, old = (x, y) if rank(x.name) > rank(y.name) else (y, x)
            w[young.name] = old
            touched.add(young.name)
            touched.add(old.name)
            continue
        if isinstance(y, GlobalVar):
            x, y = y, x
        if isinstance(x, GlobalVar):
            if _occurs(x.name, y, w):
                return False
            w[x.name] = y
            touched.add(x.name)
            continue
        if (isinstance(x, Compound) and isinstance(y, Compound)
                and x.functor == y.functor and len(x.args) == len(y.args)):
            stack.extend(zip(reversed(x.args), reversed(y.args)))
            continue
        return False
    return True


def tell(c: Constraint, b: BuiltinStore, s: UdcStore | None = None,
         rank: Rank = _default_rank) -> tuple[BuiltinStore, list[IdentifiedConstraint]]:
    """Add ``c`` (an equation or ``false``) to ``b``.

    Returns the new store and the woken constraints of ``s``: alive
    constraints mentioning a variable bound or aliased by the tell, most
    recent first.
    """
    store, touched = tell_touched(c, b, rank)
    return store, wake(touched, b, s)


def tell_touched(c: Constraint, b: BuiltinStore,
                 rank: Rank = _default_rank) -> tuple[BuiltinStore, set]:
    if not b.consistent:
        return b, set()
    if c.functor == "false" and not c.args:
        return BuiltinStore(b.bindings, False), set()
    if c.functor != "=" or len(c.args) != 2:
        raise ValueError(f"cannot tell {c}")
    w = dict(b.bindings)
    touched: set = set()
    if not _unify(c.args[0], c.args[1], w, touched, rank):
        return BuiltinStore(b.bindings, False), set()
    if not touched:
        return b, touched
    return BuiltinStore({k: _resolve(v, w) for k, v in w.items()}), touched


def wake(touched: set, old: BuiltinStore, s: UdcStore | None) -> list[IdentifiedConstraint]:
    if not touched or s is None:
        return []
    out = []
    for ic in s:
        names: set = set()
        for a in ic.constraint.args:
            term_var_names(deref(a, old), names)
        if names & touched:
            out.append(ic)
    out.reverse()
    return out


# --------------------------------------------------------------------------
# Matching and guards
# --------------------------------------------------------------------------

def instantiate(t: Term, subst: Mapping[str, Term]) -> Term:
    """Replace bound locals by their values; unbound locals stay."""
    if isinstance(t, LocalVar):
        return subst.get(t.name, t)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(instantiate(a, subst) for a in t.args))
    return t


def instantiate_constraint(c: Constraint, subst: Mapping[str, Term]) -> Constraint:
    return Constraint(c.functor, tuple(instantiate(a, subst) for a in c.args))


def match_head(pattern: Constraint, instance: Constraint,
               subst: dict) -> dict | None:
    """One-way matching of a rule head against a (dereferenced) constraint."""
    if pattern.functor != instance.functor or pattern.arity != instance.arity:
        return None
    out = dict(subst)
    stack = list(zip(pattern.args, instance.args))
    while stack:
        p, t = stack.pop()
        if isinstance(p, LocalVar):
            if p.name in out:
                if out[p.name] != t:
                    return None
            else:
                out[p.name] = t
        elif isinstance(p, Compound):
            if not (isinstance(t, Compound) and t.functor == p.functor
                    and len(t.args) == len(p.args)):
                return None
            stack.extend(zip(p.args, t.args))
        elif p != t:
            return None
    return out


class Entailment(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    MALFORMED = "malformed"


class _Malformed(Exception):
    pass


def _eval(t: Term) -> int:
    if isinstance(t, Const) and isinstance(t.value, int):
        return t.value
    if isinstance(t, Compound):
        if len(t.args) == 2 and t.functor in ("+", "-", "*", "mod"):
            x, y = _eval(t.args[0]), _eval(t.args[1])
            if t.functor == "+":
                return x + y
            if t.functor == "-":
                return x - y
            if t.functor == "*":
                return x * y
            if y == 0:
                raise _Malformed("mod by zero")
            return x % y
        if len(t.args) == 1 and t.functor == "-":
            return -_eval(t.args[0])
    raise _Malformed(f"non-numeric operand {t!r}")


_COMPARE = {
    ">": lambda x, y: x > y,
    "<": lambda x, y: x < y,
    ">=": lambda x, y: x >= y,
    "=<": lambda x, y: x <= y,
}


def _entail_eq(a: Term, b: Term, subst: dict) -> bool:
    """Equality check that may bind unbound rule locals but never globals."""
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x, y = instantiate(x, subst), instantiate(y, subst)
        if x == y:
            continue
        if isinstance(y, LocalVar):
            x, y = y, x
        if isinstance(x, LocalVar):
            if x in _locals(y):
                return False
            subst[x.name] = y
            continue
        if (isinstance(x, Compound) and isinstance(y, Compound)
                and x.functor == y.functor and len(x.args) == len(y.args)):
            stack.extend(zip(x.args, y.args))
            continue
        return False
    return True


def _locals(t: Term) -> set:
    out, stack = set(), [t]
    while stack:
        t = stack.pop()
        if isinstance(t, LocalVar):
            out.add(t)
        elif isinstance(t, Compound):
            stack.extend(t.args)
    return out


def check_guard(b: BuiltinStore, guard: Iterable[Constraint],
                subst: Mapping[str, Term]) -> tuple[Entailment, dict]:
    """Evaluate a guard under the match substitution ``subst``.

    Globals in ``subst`` values must already be dereferenced under ``b``.
    Returns the verdict and ``subst`` extended with guard-bound locals.
    """
    s = dict(subst)
    for g in guard:
        args = tuple(deref(instantiate(a, s), b) for a in g.args)
        if g.functor == "false":
            return Entailment.FAILS, s
        if g.functor == "=":
            if not _entail_eq(args[0], args[1], s):
                return Entailment.FAILS, s
            continue
        try:
            if g.functor == "is":
                value = _eval(args[1])
                lhs = args[0]
                if isinstance(lhs, LocalVar):
                    s[lhs.name] = Const(value)
                    continue
                if isinstance(lhs, Const) and isinstance(lhs.value, int):
                    if lhs.value != value:
                        return Entailment.FAILS, s
                    continue
                if isinstance(lhs, GlobalVar):
                    return Entailment.FAILS, s
                if _eval(lhs) != value:
                    return Entailment.FAILS, s
                continue
            if g.functor in _COMPARE:
                if not _COMPARE[g.functor](_eval(args[0]), _eval(args[1])):
                    return Entailment.FAILS, s
                continue
        except _Malformed:
            return Entailment.MALFORMED, s
        raise ValueError(f"not a guard built-in: {g.functor}")
    return Entailment.HOLDS, s


def entails(b: BuiltinStore, g: Constraint) -> bool:
    return check_guard(b, [g], {})[0] is Entailment.HOLDS
