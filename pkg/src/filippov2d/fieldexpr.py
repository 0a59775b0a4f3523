"""Closed-form scalar fields on the (x, y) plane.

A tiny expression language (polynomials in x, y plus sin/cos/exp/log,
integer powers) with an exact symbolic derivative.  Everything downstream
that needs high-order x-derivatives on the switching line (tangency
multiplicities, leading coefficients of transition maps) runs on these
trees, so differentiation has to be exact and closed under the language.

Grammar (ASCII, whitespace-insensitive)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' integer)?
    base   := number | 'x' | 'y' | func '(' expr ')' | '(' expr ')' | '-' base

`parse_expr` reports syntax errors with the byte offset of the offending
token.  Simplification is deliberately light: constant folding and the
0/1 identities only, enough to keep derivative trees readable.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

FUNCTIONS = ("sin", "cos", "exp", "log")
VARIABLES = ("x", "y")


class ParseError(ValueError):
    """Syntax/lexical error; carries the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalDomainError(ArithmeticError):
    """Domain error during evaluation (div by zero, log of non-positive)."""

    def __init__(self, message: str, offset: int, point):
        at = f" (subexpression at byte {offset})" if offset >= 0 else ""
        super().__init__(f"{message} at point {point}{at}")
        self.offset = offset
        self.point = point


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr
    pos: int = field(default=-1, compare=False, repr=False)


ZERO = Num(0.0)
ONE = Num(1.0)


# ---------------------------------------------------------------------------
# Smart constructors (light simplification: constant folding, 0/1 identities)

def _is_num(e: Expr, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is_num(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def powi(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Num) and not (a.value == 0.0 and n < 0):
        return Num(a.value ** n)
    return Pow(a, n)


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.i = 0

    def error(self, msg: str, offset=None) -> ParseError:
        return ParseError(msg, self.i if offset is None else offset)

    def skip_ws(self):
        while self.i < len(self.src) and self.src[self.i] in " \t\r\n":
            self.i += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.src[self.i] if self.i < len(self.src) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        self.skip_ws()
        if self.i < len(self.src):
            raise self.error("unexpected trailing input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            c = self.peek()
            if c == "+":
                p = self.i
                self.i += 1
                e = Add(e, self.term(), pos=p)
            elif c == "-":
                p = self.i
                self.i += 1
                e = Sub(e, self.term(), pos=p)
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            c = self.peek()
            if c == "*":
                p = self.i
                self.i += 1
                e = Mul(e, self.factor(), pos=p)
            elif c == "/":
                p = self.i
                self.i += 1
                e = Div(e, self.factor(), pos=p)
            else:
                return e

    def factor(self) -> Expr:
        e = self.base()
        if self.peek() == "^":
            p = self.i
            self.i += 1
            n = self.integer()
            e = Pow(e, n, pos=p)
        return e

    def integer(self) -> int:
        self.skip_ws()
        start = self.i
        if self.i < len(self.src) and self.src[self.i] == "-":
            self.i += 1
        digits = self.i
        while self.i < len(self.src) and self.src[self.i].isdigit():
            self.i += 1
        if self.i == digits:
            raise self.error("exponent must be an integer literal", start)
        # reject 2.5 style exponents explicitly
        if self.i < len(self.src) and self.src[self.i] in ".eE":
            nxt = self.src[self.i]
            if nxt == "." or (nxt in "eE" and not self._starts_ident(self.i)):
                raise self.error("exponent must be an integer literal", start)
        return int(self.src[start:self.i])

    def _starts_ident(self, j: int) -> bool:
        # 'e' right after digits could open an identifier like x^2exp -> no;
        # treat any alphabetic continuation as a malformed exponent anyway
        return False

    def base(self) -> Expr:
        c = self.peek()
        start = self.i
        if c == "":
            raise self.error("unexpected end of input")
        if ord(c) > 127:
            raise self.error("non-ASCII character")
        if c == "-":
            self.i += 1
            return Neg(self.base(), pos=start)
        if c == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha() or c == "_":
            return self.identifier()
        raise self.error(f"unexpected character {c!r}")

    def number(self) -> Expr:
        self.skip_ws()
        start = self.i
        s = self.src
        while self.i < len(s) and s[self.i].isdigit():
            self.i += 1
        if self.i < len(s) and s[self.i] == ".":
            self.i += 1
            while self.i < len(s) and s[self.i].isdigit():
                self.i += 1
        if self.i < len(s) and s[self.i] in "eE":
            j = self.i + 1
            if j < len(s) and s[j] in "+-":
                j += 1
            if j < len(s) and s[j].isdigit():
                self.i = j
                while self.i < len(s) and s[self.i].isdigit():
                    self.i += 1
        text = s[start:self.i]
        try:
            return Num(float(text), pos=start)
        except ValueError:
            raise self.error(f"malformed number {text!r}", start) from None

    def identifier(self) -> Expr:
        self.skip_ws()
        start = self.i
        s = self.src
        while self.i < len(s) and (s[self.i].isalnum() or s[self.i] == "_"):
            self.i += 1
        name = s[start:self.i]
        if name in VARIABLES:
            return Var(name, pos=start)
        if name in FUNCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(name, arg, pos=start)
        raise self.error(f"unknown identifier {name!r}", start)


def parse_expr(src: str) -> Expr:
    """Parse an expression string; raise ParseError with byte offset."""
    for j, ch in enumerate(src):
        if ord(ch) > 127:
            raise ParseError("non-ASCII character", j)
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# Printing (round-trips through parse_expr structurally)

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Neg):
        return 0
    if isinstance(e, Num) and e.value < 0:
        return 0
    return _PREC_ATOM


def _wrap(e: Expr, need: int) -> str:
    s = to_str(e)
    return f"({s})" if _prec(e) < need else s


def to_str(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        if v < 0:
            return "-" + _fmt_num(-v)
        return _fmt_num(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"{_wrap(e.a, _PREC_ADD)} + {_wrap(e.b, _PREC_ADD + 1)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.a, _PREC_ADD)} - {_wrap(e.b, _PREC_ADD + 1)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, _PREC_MUL)}*{_wrap(e.b, _PREC_MUL + 1)}"
    if isinstance(e, Div):
        return f"{_wrap(e.a, _PREC_MUL)}/{_wrap(e.b, _PREC_MUL + 1)}"
    if isinstance(e, Pow):
        return f"{_wrap(e.base, _PREC_ATOM)}^{e.exponent}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.a, _PREC_ATOM)}"
    if isinstance(e, Call):
        return f"{e.fn}({to_str(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


# ---------------------------------------------------------------------------
# Differentiation (exact, closed over the language)

def differentiate(e: Expr, var: str) -> Expr:
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Add):
        return add(differentiate(e.a, var), differentiate(e.b, var))
    if isinstance(e, Sub):
        return sub(differentiate(e.a, var), differentiate(e.b, var))
    if isinstance(e, Mul):
        return add(mul(differentiate(e.a, var), e.b),
                   mul(e.a, differentiate(e.b, var)))
    if isinstance(e, Div):
        num = sub(mul(differentiate(e.a, var), e.b),
                  mul(e.a, differentiate(e.b, var)))
        return div(num, powi(e.b, 2))
    if isinstance(e, Pow):
        inner = differentiate(e.base, var)
        return mul(mul(Num(float(e.exponent)), powi(e.base, e.exponent - 1)),
                   inner)
    if isinstance(e, Neg):
        return neg(differentiate(e.a, var))
    if isinstance(e, Call):
        darg = differentiate(e.arg, var)
        if e.fn == "sin":
            outer = Call("cos", e.arg)
        elif e.fn == "cos":
            outer = neg(Call("sin", e.arg))
        elif e.fn == "exp":
            outer = Call("exp", e.arg)
        elif e.fn == "log":
            return div(darg, e.arg)
        else:  # pragma: no cover
            raise ValueError(f"unknown function {e.fn!r}")
        return mul(outer, darg)
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

def evaluate(e: Expr, x: float, y: float) -> float:
    """Evaluate with explicit domain-error reporting (slow path)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else y
    if isinstance(e, Add):
        return evaluate(e.a, x, y) + evaluate(e.b, x, y)
    if isinstance(e, Sub):
        return evaluate(e.a, x, y) - evaluate(e.b, x, y)
    if isinstance(e, Mul):
        return evaluate(e.a, x, y) * evaluate(e.b, x, y)
    if isinstance(e, Div):
        den = evaluate(e.b, x, y)
        if den == 0.0:
            raise EvalDomainError("division by zero", e.pos, (x, y))
        return evaluate(e.a, x, y) / den
    if isinstance(e, Pow):
        b = evaluate(e.base, x, y)
        if b == 0.0 and e.exponent < 0:
            raise EvalDomainError("zero raised to negative power", e.pos, (x, y))
        return b ** e.exponent
    if isinstance(e, Neg):
        return -evaluate(e.a, x, y)
    if isinstance(e, Call):
        v = evaluate(e.arg, x, y)
        if e.fn == "sin":
            return math.sin(v)
        if e.fn == "cos":
            return math.cos(v)
        if e.fn == "exp":
            try:
                return math.exp(v)
            except OverflowError:
                return math.inf
        if e.fn == "log":
            if v <= 0.0:
                raise EvalDomainError("log of non-positive value", e.pos, (x, y))
            return math.log(v)
    raise TypeError(f"not an Expr: {e!r}")


def _codegen(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"({_codegen(e.a)} + {_codegen(e.b)})"
    if isinstance(e, Sub):
        return f"({_codegen(e.a)} - {_codegen(e.b)})"
    if isinstance(e, Mul):
        return f"({_codegen(e.a)} * {_codegen(e.b)})"
    if isinstance(e, Div):
        return f"({_codegen(e.a)} / {_codegen(e.b)})"
    if isinstance(e, Pow):
        return f"({_codegen(e.base)} ** {e.exponent})"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.a)})"
    if isinstance(e, Call):
        return f"_{e.fn}({_codegen(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


def compile_expr(e: Expr):
    """Compile a tree to a fast ``f(x, y) -> float`` callable.

    Domain errors surface as the usual Python arithmetic exceptions here;
    use :func:`evaluate` when reporting matters.
    """
    src = f"lambda x, y: {_codegen(e)}"
    ns = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp,
          "_log": math.log}
    return eval(src, ns)  # noqa: S307 - source generated from our own AST


# ---------------------------------------------------------------------------
# ScalarField: an expression plus a lazily extended cache of partials

class ScalarField:
    """A scalar function of (x, y) backed by an expression tree.

    Mixed partials of any order are available through :meth:`partial_expr`;
    the cache extends lazily under a lock so concurrent readers are safe.
    Derivatives are exact (symbolic), so e.g. the 12th x-derivative of a
    degree-8 polynomial is exactly zero, not noise.
    """

    def __init__(self, expr):
        if isinstance(expr, str):
            expr = parse_expr(expr)
        if isinstance(expr, (int, float)):
            expr = Num(float(expr))
        if not isinstance(expr, Expr):
            raise TypeError("ScalarField wants an Expr, string or number")
        self._partials = {(0, 0): expr}
        self._compiled = {}
        self._lock = threading.Lock()

    @property
    def expr(self) -> Expr:
        return self._partials[(0, 0)]

    def partial_expr(self, i: int, j: int) -> Expr:
        """Expression of d^(i+j) f / dx^i dy^j (canonical order: x first)."""
        if i < 0 or j < 0:
            raise ValueError("derivative orders must be non-negative")
        key = (i, j)
        got = self._partials.get(key)
        if got is not None:
            return got
        with self._lock:
            got = self._partials.get(key)
            if got is not None:
                return got
            if j > 0:
                base = self._partial_expr_locked(i, j - 1)
                out = differentiate(base, "y")
            else:
                base = self._partial_expr_locked(i - 1, 0)
                out = differentiate(base, "x")
            self._partials[key] = out
            return out

    def _partial_expr_locked(self, i, j):
        key = (i, j)
        got = self._partials.get(key)
        if got is not None:
            return got
        if j > 0:
            out = differentiate(self._partial_expr_locked(i, j - 1), "y")
        else:
            out = differentiate(self._partial_expr_locked(i - 1, 0), "x")
        self._partials[key] = out
        return out

    def _fn(self, i, j):
        key = (i, j)
        fn = self._compiled.get(key)
        if fn is None:
            fn = compile_expr(self.partial_expr(i, j))
            with self._lock:
                self._compiled[key] = fn
        return fn

    # -- ScalarFunc protocol -------------------------------------------------
    def value(self, x: float, y: float) -> float:
        return self._fn(0, 0)(x, y)

    def dx(self, x: float, y: float) -> float:
        return self._fn(1, 0)(x, y)

    def dy(self, x: float, y: float) -> float:
        return self._fn(0, 1)(x, y)

    def partial_value(self, i: int, j: int, x: float, y: float) -> float:
        return self._fn(i, j)(x, y)

    def x_derivative_on_line(self, x: float, y: float, k: int) -> float:
        """k-th pure x-derivative at (x, y); exact."""
        return self.partial_value(k, 0, x, y)

    def max_exact_x_order(self) -> int:
        return 10 ** 9  # symbolic: any order

    def __repr__(self):
        return f"ScalarField({to_str(self.expr)!r})"


def as_field(obj) -> ScalarField:
    if isinstance(obj, ScalarField):
        return obj
    return ScalarField(obj)
