import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from _oracles import central_jacobian
from subriemannian_walk.manifolds.expr import (
    BinOp,
    ExpressionSyntaxError,
    Func,
    Neg,
    Num,
    Pow,
    UnknownIdentifierError,
    Var,
    diff_expression,
    parse_expression,
    to_string,
)


def test_parse_examples():
    assert parse_expression("x1^2 + x2^2").evaluate(np.array([1.0, 2.0])) == 5
    assert parse_expression("-x2/2").evaluate(np.array([0.0, 3.0])) == -1.5
    beta33 = parse_expression("(x1^2 + x2^2)/4", 3)
    q = np.random.default_rng(0).uniform(-3, 3, (20, 3))
    assert np.allclose(beta33.evaluate(q), (q[:, 0] ** 2 + q[:, 1] ** 2) / 4, rtol=1e-15)


@pytest.mark.parametrize(
    "text, value",
    [
        ("-2^2", -4.0),  # power binds tighter than unary minus
        ("8/4/2", 1.0),  # left associative
        ("1 - 2 - 3", -4.0),
        ("2*3 + 4*5", 26.0),
        ("(1 + 2)*3", 9.0),
        ("2^-1", 0.5),
        ("1.5e1 + .5", 15.5),
        ("cos(0) + exp(0) + sin(0)", 2.0),
        ("--3", 3.0),
    ],
)
def test_precedence_and_literals(text, value):
    assert float(parse_expression(text).evaluate(np.zeros(1))) == pytest.approx(value)


@pytest.mark.parametrize(
    "text, pos",
    [("x1 +", 4), ("2^3^2", 3), ("(x1", 3), ("x1 $ 2", 3), ("x1 x2", 3), ("2^x1", 2), ("2^1.5", 2), ("", 0)],
)
def test_syntax_errors_carry_position(text, pos):
    # exponents are integer literals, so "2^3^2" stops at the second caret
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(text, 3)
    assert info.value.position == pos


@pytest.mark.parametrize("text", ["y + 1", "x0", "x4", "tan(x1)", "pi"])
def test_unknown_identifiers(text):
    with pytest.raises(UnknownIdentifierError):
        parse_expression(text, 3)


def test_division_by_zero_raises():
    with pytest.raises(ZeroDivisionError):
        parse_expression("1/x1").evaluate(np.array([0.0]))


@pytest.mark.parametrize(
    "text, var, expected",
    [
        ("x1*x2", 1, "x2"),
        ("-x2/2", 2, "-1/2"),
        ("x1^3", 1, "3*x1^2"),
        ("sin(x1)", 1, "cos(x1)"),
        ("x2", 1, "0"),
    ],
)
def test_diff_examples(text, var, expected):
    assert to_string(diff_expression(parse_expression(text), var)) == expected


def test_diff_matches_heisenberg_entry():
    d = diff_expression(parse_expression("(x1^2+x2^2)/4"), 1)
    q = np.random.default_rng(1).uniform(-3, 3, (10, 2))
    assert np.allclose(d.evaluate(q), q[:, 0] / 2, rtol=1e-15)


CORPUS = [
    "x1^2 + x2^2",
    "-x2/2",
    "(x1^2 + x2^2)/4",
    "1 + 1*x2^2/4",
    "-(x1 - x2)",
    "x1 - (x2 - x3)",
    "x1/(x2*x3)",
    "(x1 + x2)^3",
    "(-x1)^2",
    "sin(x1)*cos(x2) - exp(-x3/3)",
    "2*(x1 + 1)/(x2^2 + 1)",
    "x1^-2",
]


@pytest.mark.parametrize("text", CORPUS)
def test_print_parse_round_trip(text):
    e = parse_expression(text, 3)
    printed = to_string(e)
    assert printed.replace(" ", "") == text.replace(" ", "") or parse_expression(printed, 3) == e
    assert to_string(parse_expression(printed, 3)) == printed


def _exprs():
    leaves = st.one_of(
        st.integers(0, 9).map(lambda v: Num(float(v))),
        st.sampled_from([0.5, 1.25, 3.0]).map(Num),
        st.integers(1, 3).map(Var),
    )

    def extend(children):
        return st.one_of(
            children.map(Neg),
            st.tuples(st.sampled_from("+-*/"), children, children).map(lambda t: BinOp(*t)),
            st.tuples(children, st.integers(-3, 4)).map(lambda t: Pow(*t)),
            st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: Func(*t)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(_exprs())
def test_generated_round_trip(e):
    printed = to_string(e)
    reparsed = parse_expression(printed, 3)
    assert to_string(reparsed) == printed
    q = np.random.default_rng(2).uniform(0.1, 1.0, (5, 3))
    with np.errstate(all="ignore"):
        try:
            a, b = e.evaluate(q), reparsed.evaluate(q)
        except ZeroDivisionError:
            return
    finite = np.isfinite(a) & (np.abs(a) < 1e12)
    assert np.allclose(a[finite], b[finite], rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(_exprs(), st.integers(1, 3))
def test_generated_derivative_matches_fd(e, var):
    q = np.random.default_rng(3).uniform(0.3, 0.9, (8, 3))
    with np.errstate(all="ignore"):
        try:
            val = e.evaluate(q)
            d = diff_expression(e, var).evaluate(q)
            fd = central_jacobian(e.evaluate, q, h=1e-6)[:, var - 1]
        except ZeroDivisionError:
            return
    scale = np.maximum(1.0, np.abs(val))
    assume(np.all(np.isfinite(val)) and np.all(scale < 1e6) and np.all(np.isfinite(d)))
    # centred differences: truncation ~h^2 f''' and roundoff ~eps f / h
    tol = 1e-7 * np.maximum(1.0, np.abs(d)) + 1e-9 * scale
    assert np.all(np.abs(d - fd) <= tol)
