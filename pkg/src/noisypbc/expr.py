"""Safe evaluation of the small arithmetic grammar used by piecewise map files.

Accepted syntax: numbers, the variable ``x``, the constants ``pi`` and ``e``,
the binary operators ``+ - * /`` and ``^`` (``**`` is accepted as a synonym),
unary ``+``/``-``, parentheses, and the functions ``sqrt``, ``sin``, ``cos``,
``exp``, ``log`` and ``abs``. Anything else is rejected before evaluation.

Each expression compiles to two callables: a numpy-vectorised one used for
grid scans and a plain-float one used inside scalar orbit loops.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "CompiledExpr", "compile_expr", "eval_constant"]


class ExpressionError(ValueError):
    """Raised when an expression is malformed or uses unsupported syntax."""


_VEC_FUNCS: dict[str, Callable] = {
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
}

_SCALAR_FUNCS: dict[str, Callable] = {
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "abs": abs,
}

_CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _build(node: ast.AST, funcs: dict[str, Callable]) -> Callable:
    """Turn a validated AST node into a closure of one argument."""
    if isinstance(node, ast.Expression):
        return _build(node.body, funcs)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda x: value
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x: x
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda x: value
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        left = _build(node.left, funcs)
        right = _build(node.right, funcs)
        return lambda x: op(left(x), right(x))
    if isinstance(node, ast.UnaryOp):
        op = _UNARY.get(type(node.op))
        if op is None:
            raise ExpressionError(f"unsupported unary operator {type(node.op).__name__}")
        operand = _build(node.operand, funcs)
        return lambda x: op(operand(x))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in funcs:
            raise ExpressionError("only sqrt, sin, cos, exp, log and abs may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        fn = funcs[node.func.id]
        arg = _build(node.args[0], funcs)
        return lambda x: fn(arg(x))
    raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def _parse(text: str) -> ast.Expression:
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("expression must be a non-empty string")
    source = text.replace("^", "**")
    try:
        return ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None


@dataclass(frozen=True)
class CompiledExpr:
    """An expression in ``x`` with vector and scalar evaluators."""

    text: str
    vector: Callable[[np.ndarray], np.ndarray]
    scalar: Callable[[float], float]

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self.scalar(float(x))
        arr = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = self.vector(arr)
        return np.broadcast_to(np.asarray(out, dtype=float), arr.shape).copy()


def compile_expr(text: str) -> CompiledExpr:
    """Compile ``text`` into a :class:`CompiledExpr`.

    >>> compile_expr("2*x^2 - 1")(3.0)
    17.0
    """
    tree = _parse(text)
    vector = _build(tree, _VEC_FUNCS)
    scalar = _build(tree, _SCALAR_FUNCS)
    return CompiledExpr(text=text, vector=vector, scalar=scalar)


def eval_constant(value) -> float:
    """Evaluate a number or a constant expression such as ``"41/14"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        tree = _parse(value)
        for node in ast.walk(tree):
            if isinstance(node, ast.Name) and node.id == "x":
                raise ExpressionError(f"constant expected, got expression in x: {value!r}")
        return float(_build(tree, _SCALAR_FUNCS)(0.0))
    raise ExpressionError(f"cannot interpret {value!r} as a number")
