"""One-variable analytic expressions: parsing, evaluation, exact derivatives.

The grammar is fixed: real literals, a single free variable, unary minus,
``+ - * / ^`` (with ``^`` binding tightest and associating to the right,
unary minus below it), and the functions sin, cos, tan, sqrt, exp, log.
Derivatives are propagated through the tree with dual numbers, so they are
exact to machine precision rather than finite-difference approximations.

Expressions are immutable after parsing and safe to share between workers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from . import dualnum as dm
from .errors import DomainError, ParseError

FUNCTIONS = {
    "sin": dm.sin,
    "cos": dm.cos,
    "tan": dm.tan,
    "sqrt": dm.sqrt,
    "exp": dm.exp,
    "log": dm.log,
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Num:
    value: float

    def _eval(self, x):
        return self.value

    def _fmt(self):
        return repr(self.value)


@dataclass(frozen=True)
class _Var:
    name: str

    def _eval(self, x):
        return x

    def _fmt(self):
        return self.name


@dataclass(frozen=True)
class _Neg:
    arg: "_Node"

    def _eval(self, x):
        return -self.arg._eval(x)

    def _fmt(self):
        return f"(-{self.arg._fmt()})"


@dataclass(frozen=True)
class _Bin:
    op: str
    lhs: "_Node"
    rhs: "_Node"

    def _eval(self, x):
        a = self.lhs._eval(x)
        b = self.rhs._eval(x)
        try:
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            if self.op == "/":
                if dm.real(b) == 0.0:
                    raise DomainError("division by zero")
                return a / b
            return _pow_node(a, b)
        except ArithmeticError as err:
            raise DomainError(f"in '{self._fmt()}': {err}") from None

    def _fmt(self):
        return f"({self.lhs._fmt()} {self.op} {self.rhs._fmt()})"


@dataclass(frozen=True)
class _Fun:
    name: str
    arg: "_Node"

    def _eval(self, x):
        v = self.arg._eval(x)
        try:
            return FUNCTIONS[self.name](v)
        except ArithmeticError as err:
            raise DomainError(f"in '{self._fmt()}': {err}") from None

    def _fmt(self):
        return f"{self.name}({self.arg._fmt()})"


_Node = Union[_Num, _Var, _Neg, _Bin, _Fun]


def _pow_node(a, b):
    if isinstance(a, dm.Dual) or isinstance(b, dm.Dual):
        if isinstance(a, dm.Dual):
            return a ** b
        return dm.exp(b * dm.log(a))
    try:
        return math.pow(a, b)
    except ValueError as err:
        raise DomainError(f"{a!r} ^ {b!r}: {err}") from None
    except OverflowError as err:
        raise DomainError(f"{a!r} ^ {b!r}: {err}") from None


class Expression:
    """Parsed expression tree over at most one free variable."""

    __slots__ = ("root", "var", "text")

    def __init__(self, root: _Node, var: str | None, text: str):
        self.root = root
        self.var = var
        self.text = text

    def eval(self, x):
        """Evaluate at ``x`` (float or dual); no finiteness check."""
        return self.root._eval(x)

    def __call__(self, x):
        return self.root._eval(x)

    def derivative_at(self, x):
        """Exact first derivative at ``x`` via dual propagation."""
        seed = dm.Dual(x, 1.0)
        return dm.tangent_at(self.root._eval(seed), seed.level)

    def to_string(self) -> str:
        return self.root._fmt()

    def __repr__(self):
        return f"Expression({self.text!r})"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.var: str | None = None

    def _byte_offset(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def _error(self, msg: str, pos: int | None = None):
        raise ParseError(msg, self._byte_offset(self.pos if pos is None else pos))

    def _next(self):
        """Return (kind, value, start_pos) or ('end', '', len)."""
        if self.pos >= len(self.text):
            return ("end", "", len(self.text))
        m = _TOKEN_RE.match(self.text, self.pos)
        if not m or m.end() == self.pos:
            # skip leading whitespace to report the offending character
            k = self.pos
            while k < len(self.text) and self.text[k].isspace():
                k += 1
            if k >= len(self.text):
                return ("end", "", len(self.text))
            self._error(f"unexpected character {self.text[k]!r}", k)
        start = m.end() - len(m.group(m.lastgroup))
        return (m.lastgroup, m.group(m.lastgroup), start)

    def peek(self):
        return self._next()

    def advance(self):
        kind, value, start = self._next()
        if kind != "end":
            m = _TOKEN_RE.match(self.text, self.pos)
            self.pos = m.end()
        else:
            self.pos = len(self.text)
        return kind, value, start

    def parse(self) -> _Node:
        node = self.expr()
        kind, value, start = self.peek()
        if kind != "end":
            self._error(f"unexpected trailing input {value!r}", start)
        return node

    def expr(self) -> _Node:
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = _Bin(value, node, rhs)
            else:
                return node

    def term(self) -> _Node:
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.unary()
                node = _Bin(value, node, rhs)
            else:
                return node

    def unary(self) -> _Node:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return _Neg(self.unary())
        return self.power()

    def power(self) -> _Node:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            exponent = self.unary()  # right-associative; unary minus allowed here
            return _Bin("^", base, exponent)
        return base

    def atom(self) -> _Node:
        kind, value, start = self.advance()
        if kind == "num":
            return _Num(float(value))
        if kind == "name":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                if value not in FUNCTIONS:
                    self._error(f"unknown function {value!r}", start)
                self.advance()
                arg = self.expr()
                k2, v2, s2 = self.advance()
                if not (k2 == "op" and v2 == ")"):
                    self._error("expected ')'", s2)
                return _Fun(value, arg)
            if value in FUNCTIONS:
                self._error(f"function name {value!r} used as a variable", start)
            if self.var is None:
                self.var = value
            elif value != self.var:
                self._error(
                    f"second variable {value!r} (expression already uses {self.var!r})",
                    start,
                )
            return _Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            k2, v2, s2 = self.advance()
            if not (k2 == "op" and v2 == ")"):
                self._error("expected ')'", s2)
            return node
        if kind == "end":
            self._error("unexpected end of input")
        self._error(f"unexpected token {value!r}", start)


def parse(text: str) -> Expression:
    """Parse expression text; raises :class:`ParseError` with a byte offset."""
    parser = _Parser(text)
    root = parser.parse()
    return Expression(root, parser.var, text)


def evaluate(e: Expression, value: float) -> float:
    """Evaluate ``e`` at ``value``; NaN/inf raise instead of leaking out."""
    result = e.eval(value)
    r = dm.real(result)
    if not math.isfinite(r):
        raise DomainError(f"non-finite result {r!r} from '{e.text}' at {value!r}")
    return result


def differentiate_at(e: Expression, value: float) -> float:
    """Exact derivative of ``e`` at ``value`` (dual-number propagation)."""
    seed = dm.Dual(value, 1.0)
    out = e.eval(seed)
    v = dm.real(out)
    d = dm.real(dm.tangent_at(out, seed.level))
    if not (math.isfinite(v) and math.isfinite(d)):
        raise DomainError(f"non-finite derivative of '{e.text}' at {value!r}")
    return d
