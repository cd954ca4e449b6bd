"""A small arithmetic expression language over chart variables ``x1 .. xd``.

Grammar, loosest to tightest binding::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' '-'? INT)?
    atom    := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of ``sin``, ``cos``, ``exp``. Powers are integer-only.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sin", "cos", "exp")

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class ExpressionSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(ExpressionSyntaxError):
    pass


class Expr:
    """Base node. Subclasses are frozen dataclasses, hence hashable and picklable."""

    prec = _PREC_ATOM

    def evaluate(self, x):
        """Evaluate at points ``x`` of shape ``(..., d)``; returns shape ``(...)``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = self._eval(x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def __call__(self, x):
        return self.evaluate(x)

    def variables(self):
        return frozenset()

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def _eval(self, x):
        return np.float64(self.value)


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based, as written

    def _eval(self, x):
        return x[..., self.index - 1]

    def variables(self):
        return frozenset({self.index})


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    prec = _PREC_NEG

    def _eval(self, x):
        return -self.arg._eval(x)

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self):
        return _PREC_ADD if self.op in "+-" else _PREC_MUL

    def _eval(self, x):
        a = self.left._eval(x)
        b = self.right._eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise ZeroDivisionError(f"division by zero in {to_string(self)}")
        return a / b

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    prec = _PREC_POW

    def _eval(self, x):
        b = self.base._eval(x)
        if self.exponent < 0 and np.any(np.asarray(b) == 0):
            raise ZeroDivisionError(f"zero to a negative power in {to_string(self)}")
        return np.power(np.asarray(b, dtype=float), self.exponent)

    def variables(self):
        return self.base.variables()


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def _eval(self, x):
        return getattr(np, self.name)(self.arg._eval(x))

    def variables(self):
        return self.arg.variables()


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, dim):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {val!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            sign = 1
            if self.peek()[:2] == ("op", "-"):
                self.take()
                sign = -1
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ExpressionSyntaxError("exponent must be an integer literal", pos)
            return Pow(base, sign * int(val))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if not m:
                raise UnknownIdentifierError(f"unknown identifier {val!r}", pos)
            k = int(m.group(1))
            if self.dim is not None and k > self.dim:
                raise UnknownIdentifierError(f"variable {val!r} exceeds dimension {self.dim}", pos)
            return Var(k)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"unexpected {found}", pos)


def parse_expression(text: str, dim: int | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`. ``dim`` bounds the variable indices."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text, dim).parse()


# -- printing ----------------------------------------------------------------

def _fmt_num(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_string(e: Expr) -> str:
    """Render with the minimum parentheses needed to re-parse to the same tree."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if e.arg.prec < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if e.base.prec <= _PREC_POW:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        left = to_string(e.left)
        right = to_string(e.right)
        if e.left.prec < e.prec:
            left = f"({left})"
        if e.right.prec <= e.prec:
            right = f"({right})"
        if e.op in "+-":
            return f"{left} {e.op} {right}"
        return f"{left}{e.op}{right}"
    raise TypeError(f"not an expression node: {e!r}")


# -- differentiation ---------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(e, value=None):
    return isinstance(e, Num) and (value is None or e.value == value)


def _add(a, b):
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a):
    if _is_num(a, 0):
        return ZERO
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, BinOp) and a.op in "*/":
        return BinOp(a.op, _neg(a.left), a.right)
    return Neg(a)


def _mul(a, b):
    if _is_num(a, 0) or _is_num(b, 0):
        return ZERO
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0):
        return ZERO
    if _is_num(b, 1):
        return a
    return BinOp("/", a, b)


def _pow(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def diff_expression(e: Expr, var: int) -> Expr:
    """Symbolic partial derivative with respect to ``x{var}``.

    Only trivial identities (``0 + a``, ``1 * a``, ``a^1`` ...) are folded;
    no further simplification is attempted.
    """
    if var not in e.variables():
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return _neg(diff_expression(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = diff_expression(a, var), diff_expression(b, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if _is_num(db, 0):
            return _div(da, b)
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2))
    if isinstance(e, Pow):
        n = e.exponent
        inner = _mul(_pow(e.base, n - 1), diff_expression(e.base, var))
        if n < 0:
            return _neg(_mul(Num(float(-n)), inner))
        return _mul(Num(float(n)), inner)
    if isinstance(e, Func):
        da = diff_expression(e.arg, var)
        if e.name == "sin":
            return _mul(Func("cos", e.arg), da)
        if e.name == "cos":
            return _neg(_mul(Func("sin", e.arg), da))
        return _mul(e, da)
    raise TypeError(f"cannot differentiate {e!r}")
