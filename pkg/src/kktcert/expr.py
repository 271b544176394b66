"""Scalar expression language: parsing, evaluation and forward-mode gradients.

Expressions are immutable trees over the variables ``x1 .. xn``.  The grammar
is the usual arithmetic one::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ["-"] atom ["^" integer]
    atom   := number | "x" integer | func "(" expr ")" | "(" expr ")"
    func   := "exp" | "log" | "sqrt"

``^`` binds tighter than the leading minus, so ``-x1^2`` is ``-(x1^2)``.
Domain violations (log of a non-positive number, division by zero, ...) are
raised as :class:`ExprDomainError`; nothing is silently turned into NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "Dual",
    "GradientVector",
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "parse",
    "to_string",
    "evaluate",
    "gradient",
    "evaluate_many",
    "scalar_function",
    "rounding_error_bound",
    "max_variable_index",
]

UNARY_FUNCS = ("exp", "log", "sqrt")


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    """Raised on malformed input; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprDomainError(ExprError):
    """Raised when an expression is evaluated outside its domain."""

    def __init__(self, message: str, node: "Expr | None" = None):
        where = f" in {to_string(node)}" if node is not None else ""
        super().__init__(message + where)
        self.node = node


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg", "exp", "log", "sqrt"
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # "+", "-", "*", "/"
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


def max_variable_index(e: Expr) -> int:
    """Largest variable index referenced by ``e`` (0 for constants)."""
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Const):
        return 0
    if isinstance(e, Unary):
        return max_variable_index(e.arg)
    if isinstance(e, Pow):
        return max_variable_index(e.base)
    return max(max_variable_index(e.left), max_variable_index(e.right))


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.n = n

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", self.tok.offset)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            e = Binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        negate = False
        if self.tok.text == "-":
            self.advance()
            negate = True
        e = self.atom()
        if self.tok.text == "^":
            self.advance()
            e = Pow(e, self.integer_exponent())
        return Unary("neg", e) if negate else e

    def integer_exponent(self) -> int:
        sign = 1
        if self.tok.text in ("+", "-"):
            sign = -1 if self.advance().text == "-" else 1
        tok = self.tok
        if tok.kind != "number":
            raise ExprSyntaxError("exponent must be an integer constant", tok.offset)
        if not tok.text.isdigit():
            raise ExprSyntaxError(f"non-integer exponent {tok.text!r}", tok.offset)
        self.advance()
        return sign * int(tok.text)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text in UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            m = re.fullmatch(r"x(\d+)", tok.text)
            if m is None:
                raise ExprSyntaxError(f"unknown name {tok.text!r}", tok.offset)
            index = int(m.group(1))
            if not 1 <= index <= self.n:
                raise ExprSyntaxError(
                    f"variable index {tok.text} out of range for dimension {self.n}", tok.offset
                )
            return Var(index)
        if tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over ``n`` variables.

    Raises
    ------
    ExprSyntaxError
        On malformed input, out-of-range variables or non-integer exponents.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    return _Parser(text, n).parse()


def to_string(e: Expr) -> str:
    """Canonical, fully parenthesized serialization; ``parse`` reads it back."""
    if isinstance(e, Const):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return f"(-{_number(-e.value)})"
        return _number(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return f"({to_string(e.base)}^{e.exponent})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _number(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot serialize non-finite constant {v}")
    return repr(float(v))


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dual:
    """Dual number ``re + eps * du`` with ``eps**2 == 0``."""

    re: float
    du: float

    def __neg__(self) -> "Dual":
        return Dual(-self.re, -self.du)

    def __add__(self, other: "Dual") -> "Dual":
        return Dual(self.re + other.re, self.du + other.du)

    def __sub__(self, other: "Dual") -> "Dual":
        return Dual(self.re - other.re, self.du - other.du)

    def __mul__(self, other: "Dual") -> "Dual":
        return Dual(self.re * other.re, self.re * other.du + self.du * other.re)

    def __truediv__(self, other: "Dual") -> "Dual":
        q = self.re / other.re
        return Dual(q, (self.du - q * other.du) / other.re)


def _powi(a: float, k: int) -> float:
    # Python's float ** int overflows with an exception; map it to inf and
    # let the finiteness check report it.
    try:
        return a**k
    except OverflowError:
        return math.inf


class _FloatAlgebra:
    @staticmethod
    def const(v: float) -> float:
        return v

    @staticmethod
    def var(x: Sequence[float], i: int, seed: int) -> float:
        return x[i]

    @staticmethod
    def real(a: float) -> float:
        return a

    neg = staticmethod(lambda a: -a)
    add = staticmethod(lambda a, b: a + b)
    sub = staticmethod(lambda a, b: a - b)
    mul = staticmethod(lambda a, b: a * b)
    div = staticmethod(lambda a, b: a / b)

    @staticmethod
    def powi(a: float, k: int) -> float:
        return _powi(a, k)

    @staticmethod
    def exp(a: float) -> float:
        try:
            return math.exp(a)
        except OverflowError:
            return math.inf

    log = staticmethod(math.log)
    sqrt = staticmethod(math.sqrt)


class _DualAlgebra:
    @staticmethod
    def const(v: float) -> Dual:
        return Dual(v, 0.0)

    @staticmethod
    def var(x: Sequence[float], i: int, seed: int) -> Dual:
        return Dual(x[i], 1.0 if i == seed else 0.0)

    @staticmethod
    def real(a: Dual) -> float:
        return a.re

    neg = staticmethod(lambda a: -a)
    add = staticmethod(lambda a, b: a + b)
    sub = staticmethod(lambda a, b: a - b)
    mul = staticmethod(lambda a, b: a * b)
    div = staticmethod(lambda a, b: a / b)

    @staticmethod
    def powi(a: Dual, k: int) -> Dual:
        if k == 0:
            return Dual(1.0, 0.0)
        return Dual(_powi(a.re, k), k * _powi(a.re, k - 1) * a.du)

    @staticmethod
    def exp(a: Dual) -> Dual:
        v = _FloatAlgebra.exp(a.re)
        return Dual(v, v * a.du)

    @staticmethod
    def log(a: Dual) -> Dual:
        return Dual(math.log(a.re), a.du / a.re)

    @staticmethod
    def sqrt(a: Dual) -> Dual:
        v = math.sqrt(a.re)
        if v == 0.0:
            raise ExprDomainError("sqrt is not differentiable at 0")
        return Dual(v, a.du / (2.0 * v))


_U = 2.0**-53


class _ErrorAlgebra:
    """Pairs ``(value, bound)``: running first-order bound on the rounding error."""

    @staticmethod
    def const(v: float):
        return (v, 0.0)

    @staticmethod
    def var(x: Sequence[float], i: int, seed: int):
        return (x[i], 0.0)

    @staticmethod
    def real(a) -> float:
        return a[0]

    @staticmethod
    def neg(a):
        return (-a[0], a[1])

    @staticmethod
    def add(a, b):
        v = a[0] + b[0]
        return (v, a[1] + b[1] + _U * abs(v))

    @staticmethod
    def sub(a, b):
        v = a[0] - b[0]
        return (v, a[1] + b[1] + _U * abs(v))

    @staticmethod
    def mul(a, b):
        v = a[0] * b[0]
        return (v, abs(a[0]) * b[1] + abs(b[0]) * a[1] + _U * abs(v))

    @staticmethod
    def div(a, b):
        v = a[0] / b[0]
        return (v, (a[1] + abs(v) * b[1]) / abs(b[0]) + _U * abs(v))

    @staticmethod
    def powi(a, k: int):
        if k == 0:
            return (1.0, 0.0)
        v = _powi(a[0], k)
        return (v, abs(k) * abs(_powi(a[0], k - 1)) * a[1] + abs(k) * _U * abs(v))

    @staticmethod
    def exp(a):
        v = _FloatAlgebra.exp(a[0])
        return (v, v * a[1] + _U * v)

    @staticmethod
    def log(a):
        v = math.log(a[0])
        return (v, a[1] / a[0] + _U * abs(v))

    @staticmethod
    def sqrt(a):
        v = math.sqrt(a[0])
        return (v, (a[1] / (2.0 * v) if v > 0 else math.inf) + _U * v)


def _compile(e: Expr, alg) -> Callable:
    """Turn ``e`` into a closure ``f(x, seed)`` over the given number algebra."""
    if isinstance(e, Const):
        c = e.value
        return lambda x, s: alg.const(c)
    if isinstance(e, Var):
        i = e.index - 1
        return lambda x, s: alg.var(x, i, s)
    if isinstance(e, Pow):
        base = _compile(e.base, alg)
        k = e.exponent

        def pow_(x, s):
            b = base(x, s)
            if k < 0 and alg.real(b) == 0.0:
                raise ExprDomainError("zero raised to a negative power", e)
            return alg.powi(b, k)

        return pow_
    if isinstance(e, Unary):
        arg = _compile(e.arg, alg)
        if e.op == "neg":
            return lambda x, s: alg.neg(arg(x, s))
        if e.op == "exp":
            return lambda x, s: alg.exp(arg(x, s))
        if e.op == "log":

            def log_(x, s):
                a = arg(x, s)
                if not alg.real(a) > 0.0:
                    raise ExprDomainError(f"log of non-positive value {alg.real(a)!r}", e)
                return alg.log(a)

            return log_
        if e.op == "sqrt":

            def sqrt_(x, s):
                a = arg(x, s)
                if not alg.real(a) >= 0.0:
                    raise ExprDomainError(f"sqrt of negative value {alg.real(a)!r}", e)
                try:
                    return alg.sqrt(a)
                except ExprDomainError as exc:
                    raise ExprDomainError(str(exc), e) from None

            return sqrt_
        raise ValueError(f"unknown unary op {e.op!r}")
    left = _compile(e.left, alg)
    right = _compile(e.right, alg)
    if e.op == "+":
        return lambda x, s: alg.add(left(x, s), right(x, s))
    if e.op == "-":
        return lambda x, s: alg.sub(left(x, s), right(x, s))
    if e.op == "*":
        return lambda x, s: alg.mul(left(x, s), right(x, s))
    if e.op == "/":

        def div_(x, s):
            a, b = left(x, s), right(x, s)
            if alg.real(b) == 0.0:
                raise ExprDomainError("division by zero", e)
            return alg.div(a, b)

        return div_
    raise ValueError(f"unknown binary op {e.op!r}")


def _cached(e: Expr, key: str, build: Callable):
    # Nodes are frozen, so derived data can be memoized on the instance.
    # Keyed by identity rather than by (recursive, costly) structural hash.
    d = e.__dict__
    v = d.get(key)
    if v is None:
        v = d[key] = build()
    return v


def _float_fn(e: Expr) -> Callable:
    return _cached(e, "_float_fn", lambda: _compile(e, _FloatAlgebra))


def _dual_fn(e: Expr) -> Callable:
    return _cached(e, "_dual_fn", lambda: _compile(e, _DualAlgebra))


def _as_point(x) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


def _check_dim(e: Expr, x: Sequence[float]) -> None:
    k = _cached(e, "_max_index", lambda: max_variable_index(e) or -1)
    if k > len(x):
        raise ValueError(f"point has length {len(x)} but expression uses x{k}")


def evaluate(e: Expr, x: Sequence[float]) -> float:
    """Evaluate ``e`` at ``x`` in IEEE double precision.

    Raises :class:`ExprDomainError` on domain violations or non-finite results.
    """
    x = _as_point(x)
    _check_dim(e, x)
    value = _float_fn(e)(x, -1)
    if not math.isfinite(value):
        raise ExprDomainError(f"non-finite value {value!r}", e)
    return value


def scalar_function(e: Expr) -> Callable[[Sequence[float]], float]:
    """Fast evaluator for hot loops: like :func:`evaluate` minus argument checks.

    ``x`` must already be a sequence of floats of the right length.
    """
    fn = _float_fn(e)

    def f(x):
        value = fn(x, -1)
        if not math.isfinite(value):
            raise ExprDomainError(f"non-finite value {value!r}", e)
        return value

    return f


def rounding_error_bound(e: Expr, x: Sequence[float]) -> float:
    """First-order estimate of the absolute rounding error of ``evaluate(e, x)``."""
    x = _as_point(x)
    _check_dim(e, x)
    fn = _cached(e, "_err_fn", lambda: _compile(e, _ErrorAlgebra))
    return fn(x, -1)[1]


@dataclass(frozen=True)
class GradientVector:
    point: tuple[float, ...]
    value: float
    grad: tuple[float, ...]

    def __post_init__(self):
        if len(self.grad) != len(self.point):
            raise ValueError("gradient length must equal point length")


def gradient(e: Expr, x: Sequence[float]) -> GradientVector:
    """Value and exact gradient of ``e`` at ``x``.

    One dual-number sweep per coordinate.  The real parts follow exactly the
    operations of :func:`evaluate`, so ``value`` is bit-identical to it.
    """
    x = _as_point(x)
    _check_dim(e, x)
    fn = _dual_fn(e)
    grad = []
    value = None
    for i in range(len(x)):
        d = fn(x, i)
        value = d.re
        grad.append(d.du)
    if value is None:
        value = _float_fn(e)(x, -1)
    if not math.isfinite(value) or not all(math.isfinite(g) for g in grad):
        raise ExprDomainError("non-finite value or derivative", e)
    return GradientVector(x, value, tuple(grad))


# --------------------------------------------------------------------------
# Batched evaluation (grids, rejection sampling)
# --------------------------------------------------------------------------


def evaluate_many(e: Expr, X: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` at every row of ``X``.

    Rows where the expression is undefined come back as NaN.  This is meant
    for screening large batches only: callers must treat NaN as "outside the
    domain" and re-check any point they keep with :func:`evaluate`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with np.errstate(all="ignore"):
        out = _eval_array(e, X)
    out = np.broadcast_to(out, (X.shape[0],)).astype(float, copy=True)
    out[~np.isfinite(out)] = np.nan
    return out


def _eval_array(e: Expr, X: np.ndarray):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        return X[:, e.index - 1]
    if isinstance(e, Pow):
        b = np.asarray(_eval_array(e.base, X), dtype=float)
        if e.exponent < 0:
            b = np.where(b == 0.0, np.nan, b)
        return b ** float(e.exponent)
    if isinstance(e, Unary):
        a = np.asarray(_eval_array(e.arg, X), dtype=float)
        if e.op == "neg":
            return -a
        if e.op == "exp":
            return np.exp(a)
        if e.op == "log":
            return np.log(np.where(a > 0.0, a, np.nan))
        return np.sqrt(np.where(a >= 0.0, a, np.nan))
    a = _eval_array(e.left, X)
    b = _eval_array(e.right, X)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a / np.where(b == 0.0, np.nan, b)
