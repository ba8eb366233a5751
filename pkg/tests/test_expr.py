import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critwave.expr import ExpressionError, compile_expression, parse, tokenize


def test_precedence_and_associativity():
    f = compile_expression("2^3^2")
    assert f(0.0) == 512.0
    assert compile_expression("-2^2")(0.0) == -4.0
    assert compile_expression("1 - 2 - 3")(0.0) == -4.0
    assert compile_expression("8 / 4 / 2")(0.0) == 1.0
    assert compile_expression("2 * rho + 1")(3.0) == 7.0


def test_functions_vectorize():
    f = compile_expression("sin(rho) * exp(-rho) + ln(cosh(rho)) - sinh(rho)/2 + cos(rho)")
    x = np.linspace(-1, 2, 7)
    want = np.sin(x) * np.exp(-x) + np.log(np.cosh(x)) - np.sinh(x) / 2 + np.cos(x)
    np.testing.assert_allclose(f(x), want, rtol=0, atol=1e-15)


def test_constant_broadcasts():
    assert compile_expression("-2")(np.zeros(4)).shape == (4,)


def test_numbers():
    assert compile_expression("1.5e-1 + .5 + 2.")(0.0) == pytest.approx(2.65)


@pytest.mark.parametrize("bad", ["", "rho +", "sin rho", "(rho", "rho)", "x", "tan(rho)", "2 $ 3", "rho rho"])
def test_syntax_errors(bad):
    with pytest.raises(ExpressionError):
        compile_expression(bad)


def test_tokenize_positions():
    toks = tokenize("rho*2")
    assert [t[0] for t in toks] == ["name", "op", "num", "end"]
    assert parse("rho")[0] == "rho"


@st.composite
def expressions(draw, depth=0):
    """Random expression source together with an equivalent Python source."""
    if depth >= 3 or draw(st.booleans()):
        if draw(st.booleans()):
            return "rho", "x"
        c = draw(st.floats(min_value=0.1, max_value=5.0, allow_nan=False))
        return repr(c), repr(c)
    kind = draw(st.sampled_from(["+", "-", "*", "neg", "sin", "cos", "exp"]))
    a, pa = draw(expressions(depth=depth + 1))
    if kind == "neg":
        return f"-({a})", f"-({pa})"
    if kind in ("sin", "cos"):
        return f"{kind}({a})", f"math.{kind}({pa})"
    if kind == "exp":
        return f"exp(sin({a}))", f"math.exp(math.sin({pa}))"
    b, pb = draw(expressions(depth=depth + 1))
    return f"({a}) {kind} ({b})", f"({pa}) {kind} ({pb})"


@given(expressions(), st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_matches_python_evaluation(pair, x):
    src, py = pair
    got = compile_expression(src)(x)
    want = eval(py, {"math": math, "x": x})
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
