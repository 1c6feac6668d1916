"""Expressions in one real variable ``x``.

The grammar is deliberately small::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' INTEGER)?
    atom   := NUMBER | 'x' | 'pi' | ('sin' | 'cos') '(' expr ')' | '(' expr ')'

Trees are immutable, evaluate in double precision, and differentiate
symbolically into trees of the same grammar.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Pi",
    "Neg",
    "BinOp",
    "Pow",
    "Func",
    "ExprSyntaxError",
    "EvaluationError",
    "parse",
    "differentiate",
    "evaluate",
    "to_text",
    "compile_numpy",
]


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationError(ArithmeticError):
    """Evaluation produced a non-finite value."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str  # sin or cos
    arg: "Expression"


Expression = Union[Const, Var, Pi, Neg, BinOp, Pow, Func]

FUNCTIONS = ("sin", "cos")

# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.tok
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        self.advance()

    def parse(self) -> Expression:
        if self.tok[0] == "end":
            raise ExprSyntaxError("empty expression", self.tok[2])
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.tok == ("op", "-", self.tok[2]):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok[1] == "^" and self.tok[0] == "op":
            self.advance()
            kind, text, pos = self.tok
            if kind != "number" or not text.isdigit():
                raise ExprSyntaxError("exponent must be a non-negative integer literal", pos)
            self.advance()
            if self.tok[1] == "^" and self.tok[0] == "op":
                raise ExprSyntaxError("chained exponent needs parentheses", self.tok[2])
            return Pow(base, int(text))
        return base

    def atom(self) -> Expression:
        kind, text, pos = self.tok
        if kind == "number":
            self.advance()
            return Const(float(text))
        if kind == "name":
            self.advance()
            if text == "x":
                return Var()
            if text == "pi":
                return Pi()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        if text == "(" and kind == "op":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected {text!r}", pos)


def parse(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    >>> evaluate(parse("sin(pi*x) + cos(2*pi*x) + 2"), 0.5)
    2.0
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_NEG_PREC = 3
_POW_PREC = 4
_ATOM_PREC = 5


def _prec(e: Expression) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    if isinstance(e, Pow):
        return _POW_PREC
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _NEG_PREC
    return _ATOM_PREC


def _wrap(e: Expression, needs: bool) -> str:
    s = to_text(e)
    return f"({s})" if needs else s


def to_text(e: Expression) -> str:
    """Render with the fewest parentheses that re-parse to the same tree."""
    if isinstance(e, Const):
        if not math.isfinite(e.value):
            raise ValueError(f"cannot print non-finite constant {e.value}")
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            # "-0.0" must keep its parentheses below
            return ("-" if math.copysign(1.0, v) < 0 else "") + str(int(abs(v)))
        return repr(v)
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _prec(e.arg) < _NEG_PREC)
    if isinstance(e, Pow):
        return _wrap(e.base, _prec(e.base) < _ATOM_PREC) + f"^{e.exponent}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = _wrap(e.left, _prec(e.left) < p)
        right = _wrap(e.right, _prec(e.right) <= p)
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# evaluation


def _eval(e: Expression, x: float) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Pi):
        return math.pi
    if isinstance(e, Neg):
        return -_eval(e.arg, x)
    if isinstance(e, Pow):
        return _eval(e.base, x) ** e.exponent
    if isinstance(e, Func):
        return math.sin(_eval(e.arg, x)) if e.name == "sin" else math.cos(_eval(e.arg, x))
    a = _eval(e.left, x)
    b = _eval(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a / b


def evaluate(e: Expression, x: float) -> float:
    """Evaluate at ``x`` in double precision.

    Raises EvaluationError on division by zero, overflow, or any other
    non-finite result.
    """
    try:
        y = _eval(e, float(x))
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"{exc} evaluating at x={x!r}") from None
    if not math.isfinite(y):
        raise EvaluationError(f"non-finite result {y} at x={x!r}")
    return y


def compile_numpy(e: Expression) -> Callable[[np.ndarray], np.ndarray]:
    """Build an array-in, array-out evaluator.

    Non-finite values propagate as inf/nan instead of raising, which is
    what the batch simulators expect.
    """
    if isinstance(e, Const):
        v = e.value
        return lambda x: np.full(np.shape(x), v)
    if isinstance(e, Var):
        return lambda x: np.asarray(x, dtype=float)
    if isinstance(e, Pi):
        return lambda x: np.full(np.shape(x), math.pi)
    if isinstance(e, Neg):
        f = compile_numpy(e.arg)
        return lambda x: -f(x)
    if isinstance(e, Pow):
        f, n = compile_numpy(e.base), e.exponent
        if n == 2:
            return lambda x: np.square(f(x))
        return lambda x: f(x) ** n
    if isinstance(e, Func):
        f, fn = compile_numpy(e.arg), np.sin if e.name == "sin" else np.cos
        return lambda x: fn(f(x))
    f, g = compile_numpy(e.left), compile_numpy(e.right)
    op = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}[e.op]
    return lambda x: op(f(x), g(x))


# --------------------------------------------------------------------------
# differentiation

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expression, v: float | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def add(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return BinOp("/", a, b)


def neg(a: Expression) -> Expression:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expression, n: int) -> Expression:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if _is_const(a):
        return Const(a.value**n)
    return Pow(a, n)


def differentiate(e: Expression) -> Expression:
    """d/dx of ``e`` with light constant folding."""
    if isinstance(e, (Const, Pi)):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(differentiate(e.arg))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return ZERO
        inner = mul(Const(float(e.exponent)), power(e.base, e.exponent - 1))
        return mul(inner, differentiate(e.base))
    if isinstance(e, Func):
        da = differentiate(e.arg)
        if e.name == "sin":
            return mul(Func("cos", e.arg), da)
        return neg(mul(Func("sin", e.arg), da))
    a, b = e.left, e.right
    if e.op == "+":
        return add(differentiate(a), differentiate(b))
    if e.op == "-":
        return sub(differentiate(a), differentiate(b))
    if e.op == "*":
        return add(mul(differentiate(a), b), mul(a, differentiate(b)))
    # quotient rule
    num = sub(mul(differentiate(a), b), mul(a, differentiate(b)))
    return div(num, power(b, 2))
