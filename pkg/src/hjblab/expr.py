"""Arithmetic expression trees for coefficient definitions.

Drift, diffusion factor and running cost of a control problem are written
as closed-form expressions in the coordinates ``x1``, ``x2`` and the
boundary distance ``d``.  The grammar is

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-' factor) | power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

``^`` associates to the right and binds tighter than unary minus.
Available calls: exp, log, sin, cos, abs (unary), min, max, pow (binary).
There is no implicit multiplication and no user-defined functions.

Trees are immutable; evaluation is deterministic (identical tree and
bindings give a bit-identical IEEE double) and never returns a silent
NaN: domain faults are raised as :class:`DomainFaultError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import (
    ArityError,
    DomainFaultError,
    ExprParseError,
    UnboundVariableError,
    UnknownIdentifierError,
)

VARIABLES = ("x1", "x2", "d")

FUNCTIONS = {
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "abs": 1,
    "min": 2,
    "max": 2,
    "pow": 2,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Num | Var | Neg | Bin | Call


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace that the regex may have stopped on
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            raise ExprParseError(
                f"unexpected character {source[len(source) - len(stripped)]!r}",
                len(source) - len(stripped),
            )
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
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
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExprParseError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprParseError(f"unexpected {text!r}", pos)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = Bin(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = Bin(text, node, self.factor())
            else:
                return node

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            # exponent parses as a factor: right associative, may be negated
            return Bin("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            k, t, _ = self.peek()
            if k == "op" and t == "(":
                return self.call(text, pos)
            if text not in VARIABLES:
                raise UnknownIdentifierError(f"unknown identifier {text!r}", pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprParseError(f"unexpected {text!r}" if text else "unexpected end of input", pos)

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", pos)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        if len(args) != FUNCTIONS[name]:
            raise ArityError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", pos
            )
        return Call(name, tuple(args))


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises :class:`ExprParseError` (with character offset),
    :class:`UnknownIdentifierError` or :class:`ArityError`.
    """
    return _Parser(source).parse()


def free_vars(e: Expr) -> set[str]:
    """Exact set of variable names occurring in ``e``."""
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, Bin):
        return free_vars(e.lhs) | free_vars(e.rhs)
    return set().union(*(free_vars(a) for a in e.args))


def _power(base: float, exponent: float, node: Expr) -> float:
    if base < 0.0 and not float(exponent).is_integer():
        raise DomainFaultError("non-integer power of a negative base", pretty(node))
    if base == 0.0 and exponent < 0.0:
        raise DomainFaultError("zero raised to a negative power", pretty(node))
    try:
        return math.pow(base, exponent)
    except (OverflowError, ValueError):
        raise DomainFaultError("power overflow", pretty(node)) from None


def evaluate(e: Expr, bindings: dict[str, float]) -> float:
    """Evaluate ``e`` under ``bindings`` as an IEEE double.

    Domain faults (log of a nonpositive number, division by zero,
    0^negative, overflow) raise :class:`DomainFaultError` naming the
    offending sub-expression; they never propagate as NaN.
    """
    result = _eval(e, bindings)
    if math.isnan(result):
        raise DomainFaultError("evaluation produced NaN", pretty(e))
    return result


def _eval(e: Expr, bindings: dict[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, bindings)
    if isinstance(e, Bin):
        a = _eval(e.lhs, bindings)
        b = _eval(e.rhs, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            r = a * b
        elif e.op == "/":
            if b == 0.0:
                raise DomainFaultError("division by zero", pretty(e))
            r = a / b
        else:
            r = _power(a, b, e)
        if math.isinf(r):
            raise DomainFaultError("overflow", pretty(e))
        return r
    # Call
    args = [_eval(a, bindings) for a in e.args]
    if e.fn == "exp":
        try:
            return math.exp(args[0])
        except OverflowError:
            raise DomainFaultError("exp overflow", pretty(e)) from None
    if e.fn == "log":
        if args[0] <= 0.0:
            raise DomainFaultError("log of a nonpositive value", pretty(e))
        return math.log(args[0])
    if e.fn == "sin":
        return math.sin(args[0])
    if e.fn == "cos":
        return math.cos(args[0])
    if e.fn == "abs":
        return abs(args[0])
    if e.fn == "min":
        return min(args)
    if e.fn == "max":
        return max(args)
    return _power(args[0], args[1], e)


# precedence levels used by the printer; atoms sit above everything
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Num) and e.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def pretty(e: Expr) -> str:
    """Render ``e`` so that ``parse(pretty(e))`` is structurally identical."""
    return _render(e, 0)


def _render(e: Expr, context: int) -> str:
    p = _prec(e)
    if isinstance(e, Num):
        body = repr(e.value)
    elif isinstance(e, Var):
        body = e.name
    elif isinstance(e, Neg):
        body = "-" + _render(e.arg, _PREC_NEG)
    elif isinstance(e, Bin):
        if e.op == "^":
            body = _render(e.lhs, _PREC_ATOM) + "^" + _render(e.rhs, _PREC_NEG)
        else:
            body = _render(e.lhs, p) + e.op + _render(e.rhs, p + 1)
    else:
        body = e.fn + "(" + ",".join(_render(a, 0) for a in e.args) + ")"
    if p < context:
        return "(" + body + ")"
    return body
