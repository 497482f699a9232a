"""Arithmetic expression ASTs for user-defined system maps.

Grammar (EBNF)::

    expr    = term , { ( "+" | "-" ) , term } ;
    term    = factor , { ( "*" | "/" ) , factor } ;
    factor  = "-" , factor | power ;
    power   = atom , [ "^" , factor ] ;            (* right associative *)
    atom    = NUMBER | IDENT | FUNC , "(" , expr , ")" | "(" , expr , ")" ;
    IDENT   = ( "x" | "y" ) , "_" , DIGITS ;
    FUNC    = "sin" | "cos" | "exp" ;
    NUMBER  = DIGITS , [ "." , DIGITS ] , [ ( "e" | "E" ) , [ "+" | "-" ] , DIGITS ] ;

Whitespace between tokens is ignored.  ``x_i`` are parameter coordinates and
``y_j`` regressor coordinates, both 1-based.  Evaluation accepts scalars or
numpy arrays (broadcasting); scalar evaluation reports domain errors together
with the variable bindings that triggered them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Node", "Num", "Var", "Neg", "BinOp", "Call",
    "ExpressionSyntaxError", "EvaluationDomainError",
    "parse", "to_source", "evaluate", "variables",
]


class ExpressionSyntaxError(ValueError):
    """Syntax error with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvaluationDomainError(ArithmeticError):
    """Raised when evaluation leaves the real domain (division by zero, 0^negative, ...)."""

    def __init__(self, message: str, bindings: dict[str, float]):
        binds = ", ".join(f"{k}={v!r}" for k, v in sorted(bindings.items()))
        super().__init__(f"{message} [with {binds}]")
        self.bindings = bindings


class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    kind: str   # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * / ^
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str  # sin | cos | exp
    arg: Node


_FUNCTIONS = ("sin", "cos", "exp")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z]+(?:_\d+)?)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []  # (kind, text, offset)
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            off = len(source) - len(stripped)
            if not stripped:
                break
            raise ExpressionSyntaxError(f"unexpected character {stripped[0]!r}", off)
        for kind in ("num", "ident", "op"):
            text = m.group(kind)
            if text is not None:
                tokens.append((kind, text, m.start(kind)))
                break
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ExpressionSyntaxError(f"expected {op!r}", off)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ExpressionSyntaxError(f"unexpected token {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        kind, text, off = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            m = re.fullmatch(r"([xy])_(\d+)", text)
            if m is None:
                raise ExpressionSyntaxError(f"unknown identifier {text!r}", off)
            index = int(m.group(2))
            if index < 1:
                raise ExpressionSyntaxError(f"variable index must be >= 1 in {text!r}", off)
            return Var(m.group(1), index)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(
            "expected a number, variable, function call or parenthesized expression",
            off,
        )


def parse(source: str) -> Node:
    """Parse ``source`` into an AST; raises :class:`ExpressionSyntaxError` on bad input."""
    return _Parser(source).parse()


def variables(node: Node) -> set[tuple[str, int]]:
    """Set of ``(kind, index)`` variables referenced by the expression."""
    out: set[tuple[str, int]] = set()

    def walk(n: Node):
        if isinstance(n, Var):
            out.add((n.kind, n.index))
        elif isinstance(n, Neg):
            walk(n.arg)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            walk(n.arg)

    walk(node)
    return out


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PRECEDENCE = 3


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Neg):
        return _NEG_PRECEDENCE
    return 9


def to_source(node: Node) -> str:
    """Render the AST back to text; ``parse(to_source(a)) == a`` for every AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"{node.kind}_{node.index}"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        # '^' binds tighter than unary minus, and '-' of a sum needs parens too
        if _prec(node.arg) <= _NEG_PRECEDENCE:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    if isinstance(node, BinOp):
        p = _PRECEDENCE[node.op]
        left = to_source(node.left)
        right = to_source(node.right)
        # left operand: parenthesize strictly lower precedence (ops are left
        # associative except '^' which is right associative, so '^' also
        # parenthesizes an equal-precedence left child)
        if _prec(node.left) < p or (node.op == "^" and _prec(node.left) == p):
            left = f"({left})"
        # right operand: parenthesize lower-or-equal precedence for the left
        # associative operators, and lower for '^'
        if node.op == "^":
            if _prec(node.right) < p:
                right = f"({right})"
        else:
            if _prec(node.right) <= p:
                right = f"({right})"
        return f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
    raise TypeError(f"not an AST node: {node!r}")


def _bindings(x, y) -> dict[str, float]:
    out = {}
    for k, v in enumerate(np.atleast_1d(x)):
        out[f"x_{k + 1}"] = float(v)
    for k, v in enumerate(np.atleast_1d(y)):
        out[f"y_{k + 1}"] = float(v)
    return out


def evaluate(node: Node, x, y):
    """Evaluate the AST at parameter vector ``x`` and regressor vector ``y``.

    ``x[i]``/``y[j]`` entries may be scalars or broadcastable numpy arrays.
    Scalar evaluation raises :class:`EvaluationDomainError` on domain
    violations; array evaluation propagates nan/inf instead.
    """
    x_arr = [np.asarray(v, dtype=float) for v in np.atleast_1d(np.asarray(x, dtype=object))] \
        if isinstance(x, (list, tuple)) else list(np.atleast_1d(np.asarray(x, dtype=float)))
    y_arr = list(np.atleast_1d(np.asarray(y, dtype=float))) if not isinstance(y, (list, tuple)) \
        else [np.asarray(v, dtype=float) for v in y]
    scalar = all(np.ndim(v) == 0 for v in x_arr) and all(np.ndim(v) == 0 for v in y_arr)

    def rec(n: Node):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Var):
            seq = x_arr if n.kind == "x" else y_arr
            if n.index > len(seq):
                raise IndexError(f"{n.kind}_{n.index} out of range (got {len(seq)} values)")
            return seq[n.index - 1]
        if isinstance(n, Neg):
            return -rec(n.arg)
        if isinstance(n, Call):
            return getattr(np, n.fn)(rec(n.arg))
        if isinstance(n, BinOp):
            a, b = rec(n.left), rec(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                if scalar and b == 0:
                    raise EvaluationDomainError("division by zero", _bindings(x, y))
                return np.divide(a, b)
            if n.op == "^":
                if scalar:
                    if a == 0 and b < 0:
                        raise EvaluationDomainError("0 raised to a negative power", _bindings(x, y))
                    if a < 0 and b != np.floor(b):
                        raise EvaluationDomainError(
                            f"negative base {a!r} with non-integer exponent {b!r}", _bindings(x, y))
                return np.power(a, b)
        raise TypeError(f"not an AST node: {n!r}")

    with np.errstate(all="ignore"):
        value = rec(node)
    if scalar:
        value = float(value)
        if not np.isfinite(value):
            raise EvaluationDomainError("expression evaluated to a non-finite value", _bindings(x, y))
    return value
