import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow.expr import ExpressionError, parse_expression, parse_vector_expression, split_triple

P = np.array([[0.1, 0.2, 0.3], [0.7, 0.5, 0.9], [1.0, 0.0, 0.25]])


@pytest.mark.parametrize("src,expected", [
    ("1 + 2 * 3", 7.0), ("(1 + 2) * 3", 9.0), ("2 ^ 3 ^ 2", 512.0), ("-2 ^ 2", -4.0),
    ("2 ^ -1", 0.5), ("8 / 4 / 2", 1.0), ("1 - 2 - 3", -4.0), ("+3", 3.0), ("1.5e2", 150.0),
    (".5 + 1.", 1.5), ("exp(0) + cos(0) + sin(0)", 2.0),
])
def test_constants(src, expected):
    assert parse_expression(src)(P) == pytest.approx(np.full(3, expected))


def test_variables_and_functions():
    f = parse_expression("x * y - z ^ 2 + sin(x)")
    assert np.allclose(f(P), P[:, 0] * P[:, 1] - P[:, 2] ** 2 + np.sin(P[:, 0]))


@pytest.mark.parametrize("src,pos", [("1 +", 3), ("2 * (x", 6), ("foo(x)", 0), ("x $ 2", 2),
                                     ("sin x", 4), ("(x))", 3), ("", 0), ("x y", 2)])
def test_errors_report_position(src, pos):
    with pytest.raises(ExpressionError) as e:
        parse_expression(src)
    assert e.value.position == pos


def test_vector_expression():
    f = parse_vector_expression("x, sin(y * (1 + z)), 2")
    v = f(P)
    assert v.shape == (3, 3)
    assert np.allclose(v[:, 1], np.sin(P[:, 1] * (1 + P[:, 2])))
    assert split_triple("a(1, 2), b, c") == ["a(1, 2)", "b", "c"]
    with pytest.raises(ExpressionError):
        parse_vector_expression("x, y")


# random expression trees compared with Python's own evaluation
leaf = st.one_of(st.sampled_from(["x", "y", "z"]),
                 st.integers(0, 9).map(str),
                 st.floats(0.1, 5, allow_nan=False).map(lambda v: f"{v:.3f}"))


def combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        children.map(lambda c: f"-{c}"),
    )


exprs = st.recursive(leaf, combine, max_leaves=12)


@given(exprs)
def test_matches_python_evaluation(src):
    py = src.replace("^", "**")
    expected = [eval(py, {"sin": math.sin, "cos": math.cos, "x": p[0], "y": p[1], "z": p[2]})
                for p in P]
    assert np.allclose(parse_expression(src)(P), expected, rtol=1e-12, atol=1e-12)


@given(exprs)
def test_str_roundtrip(src):
    e = parse_expression(src)
    assert np.allclose(parse_expression(str(e))(P), e(P), rtol=1e-12, atol=1e-12)


@given(exprs, st.integers(0, 2))
def test_derivative_matches_sympy(src, var):
    import sympy as sy

    xs = sy.symbols("x y z")
    expr = sy.sympify(src.replace("^", "**"), locals=dict(zip("xyz", xs)))
    d = sy.lambdify(xs, sy.diff(expr, xs[var]), "numpy")
    expected = np.broadcast_to(np.asarray(d(P[:, 0], P[:, 1], P[:, 2]), dtype=float), (len(P),))
    assert np.allclose(parse_expression(src).diff(var)(P), expected, rtol=1e-10, atol=1e-10)


def test_derivative_of_powers_and_quotients():
    e = parse_expression("x ^ y / (1 + z) + exp(2 * x)")
    x, y, z = P.T
    assert np.allclose(e.diff(0)(P), y * x ** (y - 1) / (1 + z) + 2 * np.exp(2 * x))
    assert np.allclose(e.diff(2)(P), -x**y / (1 + z) ** 2)
    g = parse_vector_expression("x * y, z ^ 2, sin(x)").grad(P)
    assert g.shape == (3, 3, 3)
    assert np.allclose(g[:, 0, 1], x) and np.allclose(g[:, 1, 2], 2 * z)
    assert np.allclose(g[:, 2, 0], np.cos(x))
