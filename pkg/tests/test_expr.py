import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisypbc.expr import ExpressionError, compile_expr, eval_constant


@pytest.mark.parametrize("text, x, expected", [
    ("2*x^2 - 1", 3.0, 17.0),
    ("2*x**2 - 1", 3.0, 17.0),
    ("-x + 4", 1.5, 2.5),
    ("sqrt(x) * exp(0)", 4.0, 2.0),
    ("sin(pi*x)", 0.5, 1.0),
    ("abs(x - 3)", 1.0, 2.0),
    ("log(e)", 7.0, 1.0),
    ("163/63*x", 0.9, 163 / 63 * 0.9),
])
def test_compiled_values(text, x, expected):
    assert compile_expr(text)(x) == pytest.approx(expected, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize("text", [
    "__import__('os')", "x.real", "y + 1", "lambda: 1", "x if x else 1",
    "[x]", "x < 1", "tan(x)", "", "2 +", "f(x)(1)",
])
def test_rejects_unsupported_syntax(text):
    with pytest.raises(ExpressionError):
        compile_expr(text)


@given(st.floats(min_value=0.0, max_value=3.0, allow_nan=False))
def test_vector_and_scalar_paths_agree(x):
    e = compile_expr("x - 0.6/(0.42*sqrt(0.3))*sqrt(abs(x - 1.2)) + cos(10*pi*x)")
    vec = e(np.array([x]))[0]
    assert vec == pytest.approx(e(x), rel=1e-14, abs=1e-14)


def test_array_output_keeps_shape_for_constants():
    out = compile_expr("5")(np.zeros((2, 3)))
    assert out.shape == (2, 3) and np.all(out == 5.0)


@pytest.mark.parametrize("value, expected", [
    (3, 3.0), ("41/14", 41 / 14), ("inf", math.inf), ("2*pi", 2 * math.pi), (0.25, 0.25),
])
def test_eval_constant(value, expected):
    assert eval_constant(value) == expected


@pytest.mark.parametrize("value", ["2*x", None, True, "bogus"])
def test_eval_constant_rejects(value):
    with pytest.raises(ExpressionError):
        eval_constant(value)
