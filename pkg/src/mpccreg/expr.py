"""Expression trees for objective and constraint functions.

Expressions are parsed from a small infix grammar and evaluated with exact
first derivatives by forward-mode automatic differentiation.  Gradients are
propagated as sparse ``{index: partial}`` maps and densified on request.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?
    primary := number | name | func "(" expr ")" | "(" expr ")"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

Sparse = dict


class ParseError(ValueError):
    """Malformed expression text; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the domain of an operation (log of 0, x/0, ...)."""


def _finite(v: float, what: str) -> float:
    if not math.isfinite(v):
        raise DomainError(f"non-finite result in {what}")
    return v


def _add(a: Sparse, b: Sparse, sa: float = 1.0, sb: float = 1.0) -> Sparse:
    out = {i: sa * v for i, v in a.items()} if sa != 1.0 else dict(a)
    for i, v in b.items():
        out[i] = out.get(i, 0.0) + sb * v
    return out


def _scale(a: Sparse, s: float) -> Sparse:
    return {i: s * v for i, v in a.items()}


class Expression:
    """Base class of the immutable expression nodes."""

    __slots__ = ()

    def value(self, x) -> float:
        raise NotImplementedError

    def forward(self, x) -> tuple[float, Sparse]:
        """Value and sparse gradient at ``x``."""
        raise NotImplementedError

    def variables(self) -> set[int]:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True, slots=True)
class Const(Expression):
    val: float

    def value(self, x) -> float:
        return self.val

    def forward(self, x):
        return self.val, {}

    def variables(self):
        return set()

    def to_text(self):
        text = repr(float(self.val))
        return f"({text})" if text.startswith("-") else text


@dataclass(frozen=True, slots=True)
class Var(Expression):
    index: int
    name: str

    def value(self, x) -> float:
        return float(x[self.index])

    def forward(self, x):
        return float(x[self.index]), {self.index: 1.0}

    def variables(self):
        return {self.index}

    def to_text(self):
        return self.name


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression

    def value(self, x) -> float:
        return -self.arg.value(x)

    def forward(self, x):
        v, g = self.arg.forward(x)
        return -v, _scale(g, -1.0)

    def variables(self):
        return self.arg.variables()

    def to_text(self):
        return f"(-{self.arg.to_text()})"


def _pow_value(u: float, v: float) -> float:
    if u < 0.0 and not float(v).is_integer():
        raise DomainError("negative base with non-integer exponent")
    if u == 0.0 and v < 0.0:
        raise DomainError("zero base with negative exponent")
    try:
        return _finite(u**v, "power")
    except OverflowError as exc:
        raise DomainError("overflow in power") from exc


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    def value(self, x) -> float:
        a = self.left.value(x)
        b = self.right.value(x)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return _finite(a * b, "product")
        if op == "/":
            if b == 0.0:
                raise DomainError("division by zero")
            return _finite(a / b, "division")
        return _pow_value(a, b)

    def forward(self, x):
        a, ga = self.left.forward(x)
        b, gb = self.right.forward(x)
        op = self.op
        if op == "+":
            return a + b, _add(ga, gb)
        if op == "-":
            return a - b, _add(ga, gb, 1.0, -1.0)
        if op == "*":
            return _finite(a * b, "product"), _add(ga, gb, b, a)
        if op == "/":
            if b == 0.0:
                raise DomainError("division by zero")
            q = _finite(a / b, "division")
            return q, _add(ga, gb, 1.0 / b, -q / b)
        val = _pow_value(a, b)
        if not gb:
            # constant exponent
            if not ga:
                return val, {}
            if a == 0.0:
                if b == 1.0:
                    return val, dict(ga)
                if b < 1.0:
                    raise DomainError("derivative of power unbounded at zero base")
                return val, {i: 0.0 for i in ga}
            return val, _scale(ga, _finite(b * _pow_value(a, b - 1.0), "power derivative"))
        if a <= 0.0:
            raise DomainError("variable exponent requires a positive base")
        la = math.log(a)
        return val, _add(ga, gb, val * b / a, val * la)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def to_text(self):
        return f"({self.left.to_text()}{self.op}{self.right.to_text()})"


def _call(func: str, u: float) -> tuple[float, float]:
    """Value and derivative of an elementary function."""
    try:
        if func == "sin":
            return math.sin(u), math.cos(u)
        if func == "cos":
            return math.cos(u), -math.sin(u)
        if func == "exp":
            e = math.exp(u)
            return e, e
        if func == "log":
            if u <= 0.0:
                raise DomainError("log of non-positive argument")
            return math.log(u), 1.0 / u
        if u < 0.0:
            raise DomainError("sqrt of negative argument")
        r = math.sqrt(u)
        return r, (0.5 / r if r > 0.0 else math.inf)
    except OverflowError as exc:
        raise DomainError(f"overflow in {func}") from exc


@dataclass(frozen=True, slots=True)
class Call(Expression):
    func: str
    arg: Expression

    def value(self, x) -> float:
        return _finite(_call(self.func, self.arg.value(x))[0], self.func)

    def forward(self, x):
        u, gu = self.arg.forward(x)
        val, du = _call(self.func, u)
        _finite(val, self.func)
        if not gu:
            return val, {}
        return val, _scale(gu, _finite(du, f"derivative of {self.func}"))

    def variables(self):
        return self.arg.variables()

    def to_text(self):
        return f"{self.func}({self.arg.to_text()})"


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.tokens = tokenize(text)
        self.pos = 0
        self.index = {name: i for i, name in enumerate(names)}

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            if value == ")":
                raise ParseError("unbalanced parentheses: expected ')'", off)
            raise ParseError(f"expected {value!r}", off)

    def parse(self) -> Expression:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            if val == ")":
                raise ParseError("unbalanced parentheses: unexpected ')'", off)
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", off)
                self.take()
                arg = self.expr()
                if self.peek()[:2] == ("op", ","):
                    raise ParseError(f"{val} takes exactly 1 argument", self.peek()[2])
                self.expect(")")
                return Call(val, arg)
            if val in FUNCTIONS:
                raise ParseError(f"function {val!r} needs an argument", off)
            if val not in self.index:
                raise ParseError(f"unknown identifier {val!r}", off)
            return Var(self.index[val], val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of expression", off)
        if val == ")":
            raise ParseError("unbalanced parentheses: unexpected ')'", off)
        raise ParseError(f"unexpected token {val!r}", off)


def parse_expression(text: str, variable_names: Sequence[str]) -> Expression:
    """Parse ``text`` into an expression over ``variable_names``."""
    return _Parser(text, variable_names).parse()


def serialize(expr: Expression) -> str:
    """Fully parenthesized text that parses back to an equal-valued tree."""
    return expr.to_text()


def evaluate(expr: Expression, point) -> float:
    return expr.value(point)


def gradient(expr: Expression, point, nvars: int | None = None) -> np.ndarray:
    """Dense gradient of ``expr`` at ``point``."""
    n = len(point) if nvars is None else nvars
    _, g = expr.forward(point)
    out = np.zeros(n)
    for i, v in g.items():
        out[i] = v
    return out


def value_and_gradient(expr: Expression, point) -> tuple[float, np.ndarray]:
    v, g = expr.forward(point)
    out = np.zeros(len(point))
    for i, d in g.items():
        out[i] = d
    return v, out


# convenience constructors used by the model builders

def add(a: Expression, b: Expression) -> Expression:
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    return BinOp("*", a, b)


def const(v: float) -> Const:
    return Const(float(v))
