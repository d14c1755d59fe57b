"""Canonical prefix text form for relation expressions.

Grammar::

    expr  := "true" | "atom(" ID ")" | OP "(" expr "," expr ")"
           | "def(" expr ")" | "indef(" expr ")"
    OP    := and | or | xor | hat_and | hat_or | hat_xor

IDs may contain anything except whitespace, parentheses and commas.
"""

from __future__ import annotations

import re

from .algebra import Atom, Binary, ConstTrue, Def, Expr, Indef, Op
from .errors import ConfigurationError

_TOKEN = re.compile(r"\s*(?:([(),])|([^\s(),]+))")


def to_text(expr: Expr) -> str:
    if isinstance(expr, Atom):
        return f"atom({expr.id})"
    if expr is ConstTrue:
        return "true"
    if isinstance(expr, Binary):
        return f"{expr.op.text}({to_text(expr.left)}, {to_text(expr.right)})"
    if isinstance(expr, Def):
        return f"def({to_text(expr.child)})"
    if isinstance(expr, Indef):
        return f"indef({to_text(expr.child)})"
    raise TypeError(f"not a relation expression: {expr!r}")


def to_symbolic(expr: Expr, top: bool = True) -> str:
    """Infix rendering with set-operator symbols, for human-readable tables."""
    if isinstance(expr, Atom):
        return expr.id
    if expr is ConstTrue:
        return "1"
    if isinstance(expr, Def):
        return f"DEF({to_symbolic(expr.child)})"
    if isinstance(expr, Indef):
        return f"INDEF({to_symbolic(expr.child)})"
    left_top = isinstance(expr.left, Binary) and expr.left.op is expr.op
    text = f"{to_symbolic(expr.left, left_top)} {expr.op.symbol} {to_symbolic(expr.right, False)}"
    return text if top else f"({text})"


def _tokenize(text: str) -> list:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigurationError(f"cannot tokenize expression at offset {pos}: {text[pos:pos + 20]!r}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    return tokens


def parse_expr(text: str) -> Expr:
    tokens = _tokenize(text)
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            got = tokens[pos] if pos < len(tokens) else "end of input"
            raise ConfigurationError(f"expected {tok!r}, got {got!r} in {text!r}")
        pos += 1

    def parse() -> Expr:
        nonlocal pos
        if pos >= len(tokens):
            raise ConfigurationError(f"unexpected end of expression {text!r}")
        head = tokens[pos]
        pos += 1
        if head == "true":
            return ConstTrue
        if head == "atom":
            expect("(")
            if pos >= len(tokens) or tokens[pos] in "(),":
                raise ConfigurationError(f"missing atom id in {text!r}")
            ident = tokens[pos]
            pos += 1
            expect(")")
            return Atom(ident)
        if head in ("def", "indef"):
            expect("(")
            child = parse()
            expect(")")
            return Def(child) if head == "def" else Indef(child)
        try:
            op = Op.from_text(head)
        except KeyError:
            raise ConfigurationError(f"unknown operator {head!r} in {text!r}") from None
        expect("(")
        left = parse()
        expect(",")
        right = parse()
        expect(")")
        return Binary(op, left, right)

    expr = parse()
    if pos != len(tokens):
        raise ConfigurationError(f"trailing input after expression: {' '.join(tokens[pos:])!r}")
    return expr


def canonical_text(expr: Expr) -> str:
    """Order- and grouping-insensitive key for comparing expressions.

    Chains of the same operator are flattened (every operator is
    associative and commutative under the three-valued semantics) and
    operands are sorted.
    """
    if isinstance(expr, Binary):
        operands = []

        def flatten(node):
            if isinstance(node, Binary) and node.op is expr.op:
                flatten(node.left)
                flatten(node.right)
            else:
                operands.append(canonical_text(node))

        flatten(expr)
        return f"{expr.op.text}({', '.join(sorted(operands))})"
    if isinstance(expr, Def):
        return f"def({canonical_text(expr.child)})"
    if isinstance(expr, Indef):
        return f"indef({canonical_text(expr.child)})"
    return to_text(expr)
