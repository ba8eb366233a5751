"""Tiny expression language for user-supplied target profiles.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("+" | "-") unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | "rho" | FUNC "(" expr ")" | "(" expr ")"

The only variable is ``rho``.  Compiled expressions are numpy-vectorized.
"""
from __future__ import annotations

import re
from typing import Callable

import numpy as np

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "ln": np.log,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class ExpressionError(ValueError):
    pass


def tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    source = source.rstrip()
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {source[pos:].strip()[:1]!r} at {pos} in {source!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            raise ExpressionError(f"expected {value!r} at {pos} in {self.source!r}, got {text or 'end of input'!r}")

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input {text!r} at {pos} in {self.source!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = ("+" if op == "+" else "-", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = (op, node, rhs)
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            operand = self.unary()
            return operand if op == "+" else ("neg", operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "name":
            if text == "rho":
                return ("rho",)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", text, arg)
            raise ExpressionError(f"unknown identifier {text!r} at {pos} in {self.source!r}")
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected {text or 'end of input'!r} at {pos} in {self.source!r}")


def parse(source: str) -> tuple:
    """Parse ``source`` into a nested-tuple syntax tree."""
    return _Parser(source).parse()


def _build(node) -> Callable:
    tag = node[0]
    if tag == "num":
        value = node[1]
        return lambda rho: value + 0.0 * rho
    if tag == "rho":
        return lambda rho: rho
    if tag == "neg":
        inner = _build(node[1])
        return lambda rho: -inner(rho)
    if tag == "call":
        fn = FUNCTIONS[node[1]]
        inner = _build(node[2])
        return lambda rho: fn(inner(rho))
    lhs, rhs = _build(node[1]), _build(node[2])
    if tag == "+":
        return lambda rho: lhs(rho) + rhs(rho)
    if tag == "-":
        return lambda rho: lhs(rho) - rhs(rho)
    if tag == "*":
        return lambda rho: lhs(rho) * rhs(rho)
    if tag == "/":
        return lambda rho: lhs(rho) / rhs(rho)
    if tag == "^":
        return lambda rho: np.power(lhs(rho), rhs(rho))
    raise ExpressionError(f"bad node {node!r}")


def compile_expression(source: str) -> Callable:
    """Compile ``source`` to a function of ``rho`` (scalar or array)."""
    return _build(parse(source))
