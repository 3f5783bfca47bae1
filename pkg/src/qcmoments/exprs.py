"""Tiny arithmetic expression compiler for user-defined coordinate functions.

Supports ``+ - * / ^`` (also ``**``), unary minus, the functions ``sin``,
``cos``, ``atan``, ``exp``, the variables ``R`` and ``P`` and the constant
``pi``.  Expressions compile to vectorized numpy callables; anything outside
the grammar is rejected so config files stay data, not code.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

__all__ = ["compile_expression", "ExpressionError"]

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "atan": np.arctan, "exp": np.exp}
_CONSTANTS = {"pi": np.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


def _build(node: ast.AST, source: str):
    if isinstance(node, ast.Expression):
        return _build(node.body, source)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            value = float(node.value)
            return lambda R, P: value
        raise ExpressionError(f"unsupported constant {node.value!r} in {source!r}")
    if isinstance(node, ast.Name):
        if node.id == "R":
            return lambda R, P: R
        if node.id == "P":
            return lambda R, P: P
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda R, P: value
        raise ExpressionError(f"unknown name {node.id!r} in {source!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, source)
        if isinstance(node.op, ast.UAdd):
            return inner
        return lambda R, P: -inner(R, P)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _build(node.left, source)
        right = _build(node.right, source)
        return lambda R, P: op(left(R, P), right(R, P))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError(f"unsupported function call in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(
                f"{node.func.id} takes exactly one argument in {source!r}")
        fn = _FUNCTIONS[node.func.id]
        arg = _build(node.args[0], source)
        return lambda R, P: fn(arg(R, P))
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {source!r}")


def compile_expression(source: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Compile an expression in R and P to a broadcasting callable."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a non-empty string")
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {source!r}: {exc.msg}") from exc
    fn = _build(tree, source)

    def evaluate(R, P):
        R = np.asarray(R, dtype=float)
        P = np.asarray(P, dtype=float)
        return np.broadcast_to(np.asarray(fn(R, P), dtype=float),
                               np.broadcast(R, P).shape).copy()

    return evaluate
