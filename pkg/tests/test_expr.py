import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpwide.errors import ExprEvalError, ExprSyntaxError, UndeclaredVariableError
from gpwide.expr import BinOp, Call, Neg, Num, Var, format_node, parse_coefficient_expr, eval_coefficient


def ev(src, allowed=("t", "x", "s"), **kw):
    return eval_coefficient(parse_coefficient_expr(src, allowed), **kw)


def test_exponential_growth_expression():
    e = parse_coefficient_expr("2*exp(0.5*t)", {"t"})
    for t in (0.0, 1.0, 3.5):
        assert e(t=t) == pytest.approx(2 * math.exp(0.5 * t), rel=1e-15)


def test_polynomial_in_x():
    assert ev("x*(1-x)", {"x"}, x=0.5) == 0.25


def test_min_of_two_branches():
    assert ev("min(1, s^2 + t)", {"t", "s"}, t=0.5, s=1.0) == 1.0


def test_zero_literal_everywhere():
    assert ev("0", t=3.0, x=-2.0, s=0.1) == 0.0
    out = ev("0", x=np.linspace(0, 1, 5))
    assert out.shape == (5,) and np.all(out == 0)


def test_exp_at_one():
    assert ev("exp(t)", {"t"}, t=1.0) == pytest.approx(math.e, rel=1e-15)


def test_division_by_zero_raises():
    with pytest.raises(ExprEvalError):
        ev("1/(x-0.5)", {"x"}, x=0.5)


def test_sqrt_of_negative_raises():
    with pytest.raises(ExprEvalError):
        ev("sqrt(x)", {"x"}, x=-1.0)


def test_overflow_is_an_error():
    with pytest.raises(ExprEvalError):
        ev("exp(t)", {"t"}, t=1e5)


def test_unsupplied_variable_raises():
    with pytest.raises(ExprEvalError):
        ev("t + x", {"t", "x"}, t=1.0)


@pytest.mark.parametrize("src,value", [
    ("2^3^2", 512.0),          # right associative
    ("-2^2", -4.0),            # power binds tighter than unary minus
    ("2^-1", 0.5),
    ("--3", 3.0),
    ("1 - 2 - 3", -4.0),       # left associative
    ("8 / 4 / 2", 1.0),
    ("1 + 2 * 3", 7.0),
    ("(1 + 2) * 3", 9.0),
    ("max(1, 5, 3)", 5.0),
    ("min(4, 2, 3)", 2.0),
    ("abs(-2.5)", 2.5),
    ("1.5e1 + .5", 15.5),
    ("  3 *\t2 ", 6.0),
    ("cos(0) + sin(0)", 1.0),
])
def test_precedence_and_literals(src, value):
    assert ev(src) == value


def test_undeclared_variable_is_parse_error():
    with pytest.raises(UndeclaredVariableError):
        parse_coefficient_expr("1 + s", {"t"})


@pytest.mark.parametrize("src,pos", [
    ("1 +", 3),
    ("(1 + 2", 6),
    ("foo(1)", 0),
    ("1 $ 2", 2),
    ("exp(1, 2)", 0),
    ("max(1)", 0),
    ("2 3", 2),
])
def test_syntax_errors_carry_position(src, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse_coefficient_expr(src)
    assert info.value.position == pos
    assert f"position {pos}" in str(info.value)


def test_empty_source_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_coefficient_expr("   ")


def test_vectorised_broadcast():
    t = np.linspace(0, 1, 3)[:, None]
    x = np.linspace(0, 1, 4)[None, :]
    out = ev("t*x + 1", t=t, x=x)
    assert out.shape == (3, 4)
    assert np.allclose(out, t * x + 1)


CORPUS = [
    "0", "1", "-1", "2.5", "1e-3", "x", "t", "s", "-x", "--x", "x^2", "-x^2", "(-x)^2", "x^-2",
    "2^3^2", "(2^3)^2", "1-2-3", "1-(2-3)", "1/2/3", "1/(2/3)", "1+2*3", "(1+2)*3", "x*t",
    "exp(t)", "exp(-t)", "exp(0.5*t)*2", "sin(x)*cos(t)", "sqrt(x+1)", "abs(x-0.5)", "min(1, s^2 + t)",
    "max(x, t, s)", "min(max(x, 0), 1)", "x*(1-x)", "s*(1-s)*(1+t)", "1 - 2*s", "0.5 - s",
    "1 + 10*t", "2 + sin(t)", "1 + 0.5*t*x", "exp(-(x-0.5)^2/0.01)", "-(1+x)", "-(x*t)", "-exp(t)",
    "x/(1+t)", "(x+t)/(1+s)", "t^0.5", "2*-x", "3--x", "x^(1/3)", "(x-1)*(x-2)*(x-3)",
    "sin(3.141592653589793*x)", "1/(1+exp(-t))", "abs(-x)^2", "-(-(-x))", "max(-x, -t)",
    "((x))", "x - -t", "1e+2*x", "exp(t)^2", "(-2)^2",
]


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip_corpus(src):
    tree = parse_coefficient_expr(src)
    again = parse_coefficient_expr(format_node(tree.root))
    assert again.root == tree.root


def test_corpus_size():
    assert len(set(CORPUS)) >= 50


def _trees():
    leaves = st.one_of(
        st.floats(min_value=0, max_value=1e6, allow_nan=False).map(Num),
        st.sampled_from(["t", "x", "s"]).map(Var),
    )

    def extend(children):
        return st.one_of(
            children.map(Neg),
            st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
            st.tuples(st.sampled_from(["exp", "sin", "cos", "sqrt", "abs"]), children).map(
                lambda a: Call(a[0], (a[1],))),
            st.tuples(st.sampled_from(["min", "max"]), st.lists(children, min_size=2, max_size=3)).map(
                lambda a: Call(a[0], tuple(a[1]))),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(_trees())
def test_round_trip_random_trees(tree):
    text = format_node(tree)
    parsed = parse_coefficient_expr(text).root
    assert format_node(parsed) == text
    assert parse_coefficient_expr(format_node(parsed)).root == parsed
