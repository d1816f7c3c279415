import pytest
from hypothesis import given, strategies as st

from chrv.syntax import (
    NIL, Compound, Const, Constraint, GlobalVar, Kind, LocalVar, ParseError,
    format_program, format_term, make_list, parse_goal, parse_program, parse_term,
)

from conftest import CORPUS, program


def leq(a, b, var=LocalVar):
    return Constraint("leq", (var(a), var(b)))


def test_simplification_rule():
    (r,) = parse_program("antisymmetry @ leq(X,Y), leq(Y,X) <=> X = Y.").rules
    assert r.name == "antisymmetry"
    assert r.kind == "simplification"
    assert r.keep == ()
    assert r.remove == (leq("X", "Y"), leq("Y", "X"))
    assert r.guard == ()
    assert r.body == ((Constraint("=", (LocalVar("X"), LocalVar("Y"))),),)


def test_disjunctive_body_has_two_disjuncts():
    (r,) = program("append").rules
    assert len(r.body) == 2
    first, second = r.body
    assert first == (Constraint("=", (LocalVar("X"), NIL)),
                     Constraint("=", (LocalVar("Z"), LocalVar("Y"))))
    assert [c.functor for c in second] == ["=", "=", "append"]
    assert second[0].args[1] == Compound(".", (LocalVar("H"), LocalVar("L1")))


def test_empty_program():
    assert len(parse_program("")) == 0
    assert len(parse_program("% only a comment\n")) == 0


def test_rule_kinds():
    p = parse_program("a @ p(X) ==> q(X).  b @ p(X) \\ q(X) <=> true.  c @ p(X) <=> X > 1 | r.")
    assert [r.kind for r in p] == ["propagation", "simpagation", "simplification"]
    assert p.rule("b").body == ((),)
    assert p.rule("c").guard == (Constraint(">", (LocalVar("X"), Const(1))),)
    assert p.rule("c").body == ((Constraint("r"),),)


def test_goal_examples():
    g = parse_goal("leq(A,B),leq(B,C),leq(C,A)")
    assert g.constraints == (leq("A", "B", GlobalVar), leq("B", "C", GlobalVar),
                             leq("C", "A", GlobalVar))
    assert all(c.kind is Kind.RDC for c in g)
    assert g.variables == ("A", "B", "C")
    (c,) = parse_goal("append([1],[2],Z)").constraints
    assert c.args == (make_list([Const(1)]), make_list([Const(2)]), GlobalVar("Z"))
    assert len(parse_goal("true")) == 0
    assert len(parse_goal("leq(A,B).")) == 1


@pytest.mark.parametrize("text", ["p ; q", "X > 1", "p(", "p),"])
def test_goal_errors(text):
    with pytest.raises(ParseError):
        parse_goal(text)


def test_error_position_and_expected_tokens():
    with pytest.raises(ParseError) as info:
        parse_program("r1 @ p(X) <=> true.\nr2 @ p(X) q(X).")
    err = info.value
    assert err.line == 2
    assert err.column == 11
    assert "'<=>'" in err.expected


def test_duplicate_rule_name():
    with pytest.raises(ParseError, match="duplicate"):
        parse_program("r @ p <=> true. r @ q <=> true.")


def test_nested_disjunction_in_conjunction_rejected():
    with pytest.raises(ParseError, match="nested"):
        parse_program("r @ p <=> a, (b ; c).")


def test_body_flattening():
    (r,) = parse_program("r @ p <=> (a ; b) ; (c, (d, e)) ; true.").rules
    assert r.body == ((Constraint("a"),), (Constraint("b"),),
                      (Constraint("c"), Constraint("d"), Constraint("e")), ())


def test_anonymous_variables_are_distinct_and_fresh():
    (r,) = parse_program("r @ node(_,C), node(_1,_) ==> true.").rules
    names = [a.name for h in r.keep for a in h.args]
    assert names[1] == "C" and names[2] == "_1"
    assert len({names[0], names[3]}) == 2
    assert "_1" not in (names[0], names[3])


def test_variable_classification():
    (r,) = parse_program("r @ p(X, _y, x) <=> true.").rules
    assert [type(a) for a in r.remove[0].args] == [LocalVar, LocalVar, Const]
    (c,) = parse_goal("p(X,_y,x)").constraints
    assert [type(a) for a in c.args] == [GlobalVar, GlobalVar, Const]


def test_arithmetic_precedence():
    t = parse_term("N - 1 * 2 + mod(Y,X) - -3")
    assert t == Compound("-", (
        Compound("+", (Compound("-", (GlobalVar("N"), Compound("*", (Const(1), Const(2))))),
                       Compound("mod", (GlobalVar("Y"), GlobalVar("X"))))),
        Const(-3)))
    assert format_term(t) == "N-1*2+mod(Y,X)-(-3)"
    assert parse_term("a mod b") == Compound("mod", (Const("a"), Const("b")))


def test_format_term_examples():
    assert format_term(Compound("leq", (GlobalVar("A"), GlobalVar("B")))) == "leq(A,B)"
    assert format_term(Const("r1")) == "r1"
    assert format_term(make_list([Const(1), Const(2)])) == "[1,2]"
    assert format_term(make_list([Const(1)], GlobalVar("T"))) == "[1|T]"
    assert format_term(Compound("-", (Const(1), Compound("-", (Const(2), Const(3)))))) == "1-(2-3)"
    with pytest.raises(ValueError):
        format_term(LocalVar("X"))


@pytest.mark.parametrize("name", sorted({c[0] for c in CORPUS}))
def test_pretty_print_round_trip(name):
    p = program(name)
    assert parse_program(format_program(p)) == p


# -- properties ------------------------------------------------------------------

atoms = st.sampled_from(["a", "b", "r1", "nil", "mod"])
variables = st.sampled_from(["A", "B", "C1", "_G1", "Xs"])


def terms():
    leaves = st.one_of(
        atoms.map(Const),
        st.integers(-50, 50).map(Const),
        variables.map(GlobalVar),
        st.just(NIL),
    )

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(["f", "g", "+", "-", "*", "mod"]),
                      st.lists(children, min_size=2, max_size=2)).map(
                lambda fa: Compound(fa[0], tuple(fa[1]))),
            st.tuples(st.sampled_from(["f", "h"]), st.lists(children, min_size=1, max_size=3)).map(
                lambda fa: Compound(fa[0], tuple(fa[1]))),
            st.lists(children, max_size=3).map(make_list),
            st.tuples(st.lists(children, min_size=1, max_size=2), variables).map(
                lambda lt: make_list(lt[0], GlobalVar(lt[1]))),
        )
    return st.recursive(leaves, extend, max_leaves=12)


@given(terms())
def test_format_parse_round_trip(t):
    text = format_term(t)
    assert " " not in text
    assert parse_term(text) == t


@given(st.lists(st.lists(st.sampled_from(["p", "q(X)", "X=Y", "r(Y,[X])"]), min_size=1,
                         max_size=3), min_size=1, max_size=4))
def test_body_associativity_normalised(disjuncts):
    text = " ; ".join("(" + ", ".join(d) + ")" for d in disjuncts)
    (r,) = parse_program(f"r @ s(X,Y) <=> {text}.").rules
    assert len(r.body) == len(disjuncts)
    assert [len(d) for d in r.body] == [len(d) for d in disjuncts]
    assert all(isinstance(c, Constraint) for d in r.body for c in d)
