"""Guard/goal expression trees: evaluation, free names and canonical text."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Union

Value = Union[int, float, str, bool]

# binding strength, loosest first
PRECEDENCE = {
    "or": 1,
    "and": 2,
    "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5,
}
UNARY_PREC = 6


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Name, Unary, Binary]


class EvalError(Exception):
    pass


def names(expr: Expr) -> Iterator[str]:
    if isinstance(expr, Name):
        yield expr.id
    elif isinstance(expr, Unary):
        yield from names(expr.operand)
    elif isinstance(expr, Binary):
        yield from names(expr.left)
        yield from names(expr.right)


def _num(v: Value) -> Union[int, float]:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise EvalError(f"expected a number, got {v!r}")
    return v


def _truth(v: Value) -> bool:
    if not isinstance(v, bool):
        raise EvalError(f"expected a boolean, got {v!r}")
    return v


def evaluate(expr: Expr, env: dict) -> Value:
    """Evaluate ``expr``; names are looked up in ``env``. Raises EvalError."""
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Name):
        if expr.id not in env:
            raise EvalError(f"undefined name {expr.id!r}")
        return env[expr.id]
    if isinstance(expr, Unary):
        v = evaluate(expr.operand, env)
        if expr.op == "not":
            return not _truth(v)
        return -_num(v)
    op = expr.op
    if op == "and":
        return _truth(evaluate(expr.left, env)) and _truth(evaluate(expr.right, env))
    if op == "or":
        return _truth(evaluate(expr.left, env)) or _truth(evaluate(expr.right, env))
    a = evaluate(expr.left, env)
    b = evaluate(expr.right, env)
    if op == "==":
        return type(a) is type(b) and a == b or (_is_num(a) and _is_num(b) and a == b)
    if op == "!=":
        return not (type(a) is type(b) and a == b or (_is_num(a) and _is_num(b) and a == b))
    if op in ("<", "<=", ">", ">="):
        if isinstance(a, str) and isinstance(b, str):
            pass
        else:
            a, b = _num(a), _num(b)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
    if op == "+" and isinstance(a, str) and isinstance(b, str):
        return a + b
    a, b = _num(a), _num(b)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise EvalError("division by zero")
        return a / b
    raise EvalError(f"unknown operator {op!r}")


def _is_num(v: Value) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# ---------------------------------------------------------------------------
# Canonical text
# ---------------------------------------------------------------------------


def format_number(value: Union[int, float]) -> str:
    if isinstance(value, int):
        return str(value)
    text = repr(float(value))
    if "inf" in text or "nan" in text:
        raise ValueError(f"non-finite number {value!r} has no literal form")
    return text


def format_literal(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    return format_number(value)


def to_source(expr: Expr) -> str:
    return _fmt(expr, 0)


def _fmt(expr: Expr, parent_prec: int) -> str:
    if isinstance(expr, Lit):
        return format_literal(expr.value)
    if isinstance(expr, Name):
        return expr.id
    if isinstance(expr, Unary):
        inner = _fmt(expr.operand, UNARY_PREC)
        if expr.op == "-" and isinstance(expr.operand, Lit) and _is_num(expr.operand.value):
            # "-3" would re-read as the literal -3
            inner = f"({inner})"
        text = f"not {inner}" if expr.op == "not" else f"-{inner}"
        return f"({text})" if parent_prec > UNARY_PREC else text
    prec = PRECEDENCE[expr.op]
    left = _fmt(expr.left, prec)
    # left-associative: an equal-precedence right operand needs parentheses
    right = _fmt(expr.right, prec + 1)
    text = f"{left} {expr.op} {right}"
    return f"({text})" if prec < parent_prec else text
