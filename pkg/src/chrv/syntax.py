"""Abstract syntax, parser and printer for CHR-or programs and goals.

Rule text uses the usual surface forms::

    name @ Keep \\ Remove <=> Guard | Body.
    name @ Remove <=> Guard | Body.
    name @ Keep ==> Guard | Body.

Identifiers starting with an uppercase letter or ``_`` are variables.  In
rule text they are rule-local (:class:`LocalVar`); in goal text they are
run-scoped (:class:`GlobalVar`).  Lists are written ``[a,b]`` / ``[H|T]``
and desugared to ``'.'/2`` cells ending in the ``[]`` constant.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

__all__ = [
    "Const", "LocalVar", "GlobalVar", "Compound", "Term", "NIL", "CONS",
    "Kind", "Constraint", "Rule", "Program", "Goal", "ParseError",
    "make_list", "list_items", "term_vars", "is_ground",
    "parse_program", "parse_goal", "parse_term",
    "format_term", "format_constraint", "format_rule", "format_program",
    "constraint_term", "term_constraint",
]


# --------------------------------------------------------------------------
# Terms
# --------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Const:
    value: Union[str, int]

    def __repr__(self) -> str:
        return f"Const({self.value!r})"


@dataclass(frozen=True, slots=True)
class LocalVar:
    name: str


@dataclass(frozen=True, slots=True)
class GlobalVar:
    name: str


@dataclass(frozen=True, slots=True)
class Compound:
    functor: str
    args: tuple

    @property
    def arity(self) -> int:
        return len(self.args)


Term = Union[Const, LocalVar, GlobalVar, Compound]

NIL = Const("[]")
CONS = "."


def make_list(items: Sequence[Term], tail: Term = NIL) -> Term:
    out = tail
    for item in reversed(items):
        out = Compound(CONS, (item, out))
    return out


def list_items(t: Term) -> tuple[list[Term], Term]:
    """Split a cons chain into its elements and the final tail."""
    items = []
    while isinstance(t, Compound) and t.functor == CONS and len(t.args) == 2:
        items.append(t.args[0])
        t = t.args[1]
    return items, t


def term_vars(t: Term, acc: dict | None = None) -> dict:
    """Variables of ``t`` in order of first occurrence (dict used as ordered set)."""
    if acc is None:
        acc = {}
    stack = [t]
    while stack:
        t = stack.pop()
        if isinstance(t, (LocalVar, GlobalVar)):
            acc.setdefault(t, None)
        elif isinstance(t, Compound):
            stack.extend(reversed(t.args))
    return acc


def is_ground(t: Term) -> bool:
    return not term_vars(t)


# --------------------------------------------------------------------------
# Constraints, rules, programs
# --------------------------------------------------------------------------

class Kind(enum.Enum):
    RDC = "RDC"
    BIC = "BIC"


#: Binary built-in relations.  ``=`` is the only one that can be told;
#: the others are guard tests.
RELATIONS = ("=", ">", "<", ">=", "=<", "is")
GUARD_ARITHMETIC = frozenset({">", "<", ">=", "=<", "is"})


@dataclass(frozen=True, slots=True)
class Constraint:
    functor: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def kind(self) -> Kind:
        if self.functor in RELATIONS and len(self.args) == 2:
            return Kind.BIC
        if self.functor == "false" and not self.args:
            return Kind.BIC
        return Kind.RDC

    @property
    def key(self) -> tuple[str, int]:
        return self.functor, len(self.args)

    def __str__(self) -> str:
        return format_constraint(self, allow_locals=True)


Conjunction = tuple  # tuple[Constraint, ...]
Body = tuple  # tuple[Conjunction, ...], never empty


@dataclass(frozen=True, slots=True)
class Rule:
    name: str
    keep: tuple = ()
    remove: tuple = ()
    guard: tuple = ()
    body: tuple = ((),)

    @property
    def heads(self) -> tuple:
        """Head constraints in matching order: keep heads, then remove heads."""
        return self.keep + self.remove

    @property
    def kind(self) -> str:
        if not self.remove:
            return "propagation"
        if not self.keep:
            return "simplification"
        return "simpagation"

    @property
    def disjunctive(self) -> bool:
        return len(self.body) > 1

    def __str__(self) -> str:
        return format_rule(self)


@dataclass(frozen=True)
class Program:
    rules: tuple = ()

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class Goal:
    constraints: tuple = ()

    @property
    def variables(self) -> tuple[str, ...]:
        """Goal variable names in order of first appearance."""
        acc: dict = {}
        for c in self.constraints:
            for a in c.args:
                term_vars(a, acc)
        return tuple(v.name for v in acc)

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self) -> int:
        return len(self.constraints)

    def __str__(self) -> str:
        if not self.constraints:
            return "true"
        return ",".join(format_constraint(c) for c in self.constraints)


def constraint_term(c: Constraint) -> Term:
    """View a constraint as a term (used for match equations)."""
    if not c.args:
        return Const(c.functor)
    return Compound(c.functor, tuple(c.args))


def term_constraint(t: Term) -> Constraint:
    if isinstance(t, Const) and isinstance(t.value, str) and t != NIL:
        return Constraint(t.value)
    if isinstance(t, Compound) and t.functor != CONS:
        return Constraint(t.functor, t.args)
    raise ValueError(f"not a constraint: {format_term(t, allow_locals=True)}")


# --------------------------------------------------------------------------
# Tokenizer
# --------------------------------------------------------------------------

class ParseError(ValueError):
    """Syntax error with a 1-based source position and the expected tokens."""

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 expected: Sequence[str] = ()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        where = f"line {line}, column {column}: " if line else ""
        exp = f" (expected {' or '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}{message}{exp}")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # INT VAR ATOM PUNCT EOF
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|%[^\n]*)
  | (?P<int>\d+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<atom>[a-z][A-Za-z0-9_]*)
  | (?P<punct><=>|==>|=<|>=|!=|[()\[\],;|@\\.=<>+\-*])
  | (?P<bad>.)
""", re.VERBOSE | re.DOTALL)


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            n = chunk.count("\n")
            if n:
                line += n
                line_start = m.start() + chunk.rindex("\n") + 1
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", line,
                             m.start() - line_start + 1)
        tokens.append(Token(kind.upper(), m.group(), line, m.start() - line_start + 1))
    tokens.append(Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

_ADD_OPS = ("+", "-")
_MUL_OPS = ("*",)
_PREC = {"+": 500, "-": 500, "*": 400, "mod": 400}


class _Backtrack(Exception):
    pass


class Parser:
    """Recursive-descent parser shared by programs, goals and traces.

    ``var_kind`` selects the class used for variable tokens.  ``anonymous``
    controls ``_``: "fresh" renames each occurrence apart, "keep" leaves it.
    """

    def __init__(self, text: str, var_kind: type = LocalVar,
                 anonymous: str = "fresh"):
        self.tokens = tokenize(text)
        self.pos = 0
        self.var_kind = var_kind
        self.anonymous = anonymous
        self._anon = 0
        self._reserved: set[str] = set()

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("PUNCT", "ATOM") and t.text == text

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def error(self, message: str, expected: Sequence[str] = ()) -> ParseError:
        t = self.tok
        found = repr(t.text) if t.kind != "EOF" else "end of input"
        return ParseError(f"{message}, found {found}", t.line, t.column, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error("syntax error", [repr(text)])
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error("syntax error", [what])
        return self.advance()

    def at_eof(self) -> bool:
        return self.tok.kind == "EOF"

    # -- terms --------------------------------------------------------------

    def variable(self, name: str) -> Term:
        if name == "_" and self.anonymous == "fresh":
            while True:
                self._anon += 1
                fresh = f"_{self._anon}"
                if fresh not in self._reserved:
                    break
            return self.var_kind(fresh)
        return self.var_kind(name)

    def expr(self) -> Term:
        left = self.mul_expr()
        while self.tok.kind == "PUNCT" and self.tok.text in _ADD_OPS:
            op = self.advance().text
            left = Compound(op, (left, self.mul_expr()))
        return left

    def mul_expr(self) -> Term:
        left = self.unary()
        while True:
            t = self.tok
            if t.kind == "PUNCT" and t.text in _MUL_OPS:
                op = self.advance().text
            elif t.kind == "ATOM" and t.text == "mod" and not (
                    self.peek().kind == "PUNCT" and self.peek().text == "("):
                op = self.advance().text
            else:
                return left
            left = Compound(op, (left, self.unary()))

    def unary(self) -> Term:
        t = self.tok
        if t.kind == "PUNCT" and t.text in ("+", "-", "*") and self.peek().text == "(" \
                and self.peek().kind == "PUNCT":
            self.advance()
            return Compound(t.text, self.arguments())
        if t.kind == "PUNCT" and t.text == "-":
            self.advance()
            if self.tok.kind == "INT":
                return Const(-int(self.advance().text))
            return Compound("-", (self.unary(),))
        return self.primary()

    def primary(self) -> Term:
        t = self.tok
        if t.kind == "INT":
            self.advance()
            return Const(int(t.text))
        if t.kind == "VAR":
            self.advance()
            return self.variable(t.text)
        if t.kind == "ATOM":
            self.advance()
            if self.tok.kind == "PUNCT" and self.tok.text == "(":
                return Compound(t.text, self.arguments())
            return Const(t.text)
        if self.accept("["):
            return self.list_rest()
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        raise self.error("syntax error", ["term"])

    def arguments(self) -> tuple:
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        return tuple(args)

    def list_rest(self) -> Term:
        if self.accept("]"):
            return NIL
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        tail = self.expr() if self.accept("|") else NIL
        self.expect("]")
        return make_list(items, tail)

    # -- constraints and bodies ---------------------------------------------

    def constraint(self) -> Constraint:
        start = self.tok
        left = self.expr()
        t = self.tok
        if (t.kind == "PUNCT" and t.text in RELATIONS) or (t.kind == "ATOM" and t.text == "is"):
            op = self.advance().text
            return Constraint(op, (left, self.expr()))
        if isinstance(left, Const) and isinstance(left.value, str) and left != NIL:
            return Constraint(left.value)
        if isinstance(left, Compound) and left.functor not in (CONS, "+", "-", "*", "mod"):
            return Constraint(left.functor, left.args)
        raise ParseError("expected a constraint", start.line, start.column,
                         ["constraint"])

    def _item(self):
        """One conjunct: a constraint, or a parenthesised sub-body."""
        if self.at("("):
            save = self.pos
            try:
                self.advance()
                sub = self.body()
                self.expect(")")
                t = self.tok
                if (t.kind == "PUNCT" and t.text in RELATIONS + _ADD_OPS + _MUL_OPS) \
                        or (t.kind == "ATOM" and t.text in ("is", "mod")):
                    raise _Backtrack
                return sub
            except (ParseError, _Backtrack):
                self.pos = save
        return self.constraint()

    def conjunction(self) -> list:
        items = [self._item()]
        while self.accept(","):
            items.append(self._item())
        return items

    def body(self) -> tuple:
        """Disjunction of conjunctions, associativity-normalised."""
        disjuncts: list[tuple] = []
        start = self.tok
        while True:
            items = self.conjunction()
            if len(items) == 1 and isinstance(items[0], tuple):
                disjuncts.extend(items[0])
            else:
                conj: list[Constraint] = []
                for it in items:
                    if isinstance(it, tuple):
                        if len(it) > 1:
                            raise ParseError(
                                "disjunction nested inside a conjunction is not supported",
                                start.line, start.column)
                        conj.extend(it[0])
                    elif not (it.functor == "true" and not it.args):
                        conj.append(it)
                disjuncts.append(tuple(conj))
            if not self.accept(";"):
                return tuple(disjuncts)

    def head(self) -> tuple:
        heads = [self.constraint()]
        while self.accept(","):
            heads.append(self.constraint())
        return tuple(heads)

    # -- rules --------------------------------------------------------------

    def _rule_var_names(self) -> set[str]:
        names = set()
        i = self.pos
        while self.tokens[i].kind != "EOF" and not (
                self.tokens[i].kind == "PUNCT" and self.tokens[i].text == "."):
            if self.tokens[i].kind == "VAR":
                names.add(self.tokens[i].text)
            i += 1
        return names

    def rule(self) -> Rule:
        self._reserved = self._rule_var_names()
        self._anon = 0
        name = self.expect_kind("ATOM", "rule name").text
        self.expect("@")
        first = self.head()
        if self.accept("\\"):
            keep, remove = first, self.head()
            self.expect("<=>")
        elif self.accept("<=>"):
            keep, remove = (), first
        elif self.accept("==>"):
            keep, remove = first, ()
        else:
            raise self.error("syntax error", ["'\\'", "'<=>'", "'==>'"])
        guard: tuple = ()
        body = self.body()
        if self.accept("|"):
            if len(body) != 1:
                raise self.error("a guard cannot contain a disjunction")
            guard = body[0]
            body = self.body()
        self.expect(".")
        return Rule(name, keep, remove, guard, body)


def parse_program(text: str) -> Program:
    """Parse rule clauses; rule order follows the source."""
    p = Parser(text, LocalVar)
    rules = []
    seen: dict[str, Token] = {}
    while not p.at_eof():
        start = p.tok
        r = p.rule()
        if r.name in seen:
            raise ParseError(f"duplicate rule name {r.name!r}", start.line, start.column)
        seen[r.name] = start
        rules.append(r)
    return Program(tuple(rules))


#: Built-ins a goal may contain; guard arithmetic is only meaningful in guards.
GOAL_BUILTINS = frozenset({"=", "false"})


def parse_goal(text: str) -> Goal:
    """Parse a comma-separated goal; variables become :class:`GlobalVar`."""
    p = Parser(text, GlobalVar)
    p._reserved = {t.text for t in p.tokens if t.kind == "VAR"}
    if p.at_eof():
        return Goal(())
    body = p.body()
    p.accept(".")
    if not p.at_eof():
        raise p.error("syntax error", ["','", "end of input"])
    if len(body) != 1:
        raise ParseError("a goal is a conjunction; top-level disjunction is not allowed", 1, 1)
    for c in body[0]:
        if c.kind is Kind.BIC and c.functor not in GOAL_BUILTINS:
            raise ParseError(f"built-in {c.functor!r} is only allowed in guards", 1, 1)
    return Goal(body[0])


def parse_term(text: str, var_kind: type = GlobalVar) -> Term:
    p = Parser(text, var_kind, anonymous="keep")
    t = p.expr()
    if not p.at_eof():
        raise p.error("syntax error", ["end of input"])
    return t


# --------------------------------------------------------------------------
# Printer
# --------------------------------------------------------------------------

def format_term(t: Term, allow_locals: bool = False) -> str:
    """Canonical, whitespace-free rendering; ``parse_term`` inverts it."""
    return _fmt(t, 999, allow_locals)


def _fmt(t: Term, prec: int, allow_locals: bool) -> str:
    if isinstance(t, Const):
        v = t.value
        if isinstance(v, int) and v < 0 and prec < 999:
            return f"({v})"
        return str(v)
    if isinstance(t, GlobalVar):
        return t.name
    if isinstance(t, LocalVar):
        if not allow_locals:
            raise ValueError(f"local variable {t.name} cannot be printed here")
        return t.name
    if t.functor == CONS and len(t.args) == 2:
        items, tail = list_items(t)
        inner = ",".join(_fmt(i, 999, allow_locals) for i in items)
        if tail != NIL:
            inner += "|" + _fmt(tail, 999, allow_locals)
        return f"[{inner}]"
    if t.functor in ("+", "-", "*") and len(t.args) == 2:
        p = _PREC[t.functor]
        s = (_fmt(t.args[0], p, allow_locals) + t.functor
             + _fmt(t.args[1], p - 1, allow_locals))
        return f"({s})" if p > prec else s
    args = ",".join(_fmt(a, 999, allow_locals) for a in t.args)
    return f"{t.functor}({args})"


def format_constraint(c: Constraint, allow_locals: bool = False) -> str:
    if c.functor in RELATIONS and len(c.args) == 2:
        sep = " is " if c.functor == "is" else c.functor
        return (format_term(c.args[0], allow_locals) + sep
                + format_term(c.args[1], allow_locals))
    if not c.args:
        return c.functor
    return f"{c.functor}({','.join(format_term(a, allow_locals) for a in c.args)})"


def _conj(conj: Sequence[Constraint]) -> str:
    if not conj:
        return "true"
    return ", ".join(format_constraint(c, allow_locals=True) for c in conj)


def format_body(body: Body) -> str:
    if len(body) == 1:
        return _conj(body[0])
    return " ; ".join(f"({_conj(d)})" for d in body)


def format_rule(r: Rule) -> str:
    if r.keep and r.remove:
        head = f"{_conj(r.keep)} \\ {_conj(r.remove)} <=>"
    elif r.remove:
        head = f"{_conj(r.remove)} <=>"
    else:
        head = f"{_conj(r.keep)} ==>"
    guard = f" {_conj(r.guard)} |" if r.guard else ""
    return f"{r.name} @ {head}{guard} {format_body(r.body)}."


def format_program(p: Program) -> str:
    """Source text that :func:`parse_program` reads back to ``p``."""
    return "".join(format_rule(r) + "\n" for r in p.rules)
