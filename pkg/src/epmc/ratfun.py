"""Exact multivariate rational functions over named variables.

Polynomials are backed by FLINT's ``fmpq_mpoly`` (sparse, exact rational
coefficients).  Every polynomial lives in a context whose generators are a
sorted tuple of variable names with graded-lex ordering, so the first name in
ascending order is the most significant variable.  Binary operations lift both
operands into the union context.

Canonical form of a ``RationalFunction``:

* ``gcd(num, den)`` is a unit,
* ``den`` has coprime integer coefficients and a positive leading coefficient,
* the context contains exactly the variables occurring in ``num`` or ``den``.

Two canonical values are equal iff they are structurally equal, so ``==`` is
semantic equality.  Printed form: ``num`` if ``den == 1`` else
``(num)/(den)``, each polynomial printed as ``c*x^2*y - 3/4*z + 1`` with terms
in descending graded-lex order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Union

import flint

from .errors import DenominatorZeroAtPoint, DivisionByZero, ParseError, UnboundVariable

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

Number = Union[int, Fraction, float]
Valuation = Mapping[str, Number]


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if not _IDENT.match(self.name):
            raise ValueError(f"invalid variable name {self.name!r}")

    def __str__(self) -> str:
        return self.name


@lru_cache(maxsize=None)
def _ctx(names: tuple[str, ...]):
    return flint.fmpq_mpoly_ctx.get(names, "deglex")


_EMPTY = _ctx(())


def _lift(p, ctx):
    return p if p.context() is ctx else p.project_to_context(ctx)


def _union_ctx(*polys):
    ctxs = {id(p.context()): p.context() for p in polys}
    if len(ctxs) == 1:
        return next(iter(ctxs.values()))
    names = set()
    for c in ctxs.values():
        names.update(c.names())
    return _ctx(tuple(sorted(names)))


def _to_fmpq(x: Number) -> flint.fmpq:
    if isinstance(x, flint.fmpq):
        return x
    if isinstance(x, bool):
        x = int(x)
    if isinstance(x, int):
        return flint.fmpq(x)
    fr = x if isinstance(x, Fraction) else Fraction(x)
    return flint.fmpq(fr.numerator, fr.denominator)


def _fraction(q) -> Fraction:
    return Fraction(int(q.p), int(q.q))


def _signed_content(p) -> flint.fmpq:
    """Rational c with p/c primitive over Z and positive leading coefficient."""
    g = 0
    lcm = 1
    for c in p.coeffs():
        g = math.gcd(g, int(c.p))
        q = int(c.q)
        if q != 1:
            lcm = lcm * q // math.gcd(lcm, q)
    c = flint.fmpq(g, lcm)
    return -c if p.leading_coefficient() < 0 else c


class Polynomial:
    """Sparse polynomial with exact rational coefficients (immutable)."""

    __slots__ = ("_p",)

    def __init__(self, raw):
        self._p = raw

    @classmethod
    def constant(cls, c: Number) -> "Polynomial":
        return cls(_EMPTY.constant(_to_fmpq(c)))

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        Variable(name)
        return cls(_ctx((name,)).gens()[0])

    @classmethod
    def from_terms(cls, terms: Mapping[tuple[tuple[str, int], ...], Number]) -> "Polynomial":
        names = tuple(sorted({v for mono in terms for v, _ in mono}))
        ctx = _ctx(names)
        index = {n: i for i, n in enumerate(names)}
        data = {}
        for mono, c in terms.items():
            exps = [0] * len(names)
            for v, e in mono:
                exps[index[v]] += e
            key = tuple(exps)
            data[key] = data.get(key, 0) + Fraction(c)
        return cls(ctx.from_dict({k: _to_fmpq(v) for k, v in data.items() if v != 0}))

    @property
    def terms(self) -> dict[tuple[tuple[str, int], ...], Fraction]:
        names = self._p.context().names()
        out = {}
        for exps, c in self._p.terms():
            mono = tuple((names[i], e) for i, e in enumerate(exps) if e)
            out[mono] = _fraction(c)
        return out

    @property
    def variables(self) -> frozenset[str]:
        unused = set(self._p.unused_gens())
        return frozenset(n for n in self._p.context().names() if n not in unused)

    def __len__(self) -> int:
        return len(self._p)

    def is_zero(self) -> bool:
        return self._p.is_zero()

    def is_constant(self) -> bool:
        return self._p.is_constant()

    def _binary(self, other, op):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other)
        ctx = _union_ctx(self._p, other._p)
        return Polynomial(op(_lift(self._p, ctx), _lift(other._p, ctx)))

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return Polynomial(-self._p)

    def __pow__(self, k: int):
        return Polynomial(self._p ** k)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            try:
                other = Polynomial.constant(other)
            except (TypeError, ValueError):
                return NotImplemented
        ctx = _union_ctx(self._p, other._p)
        return _lift(self._p, ctx) == _lift(other._p, ctx)

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def evaluate(self, valuation: Valuation) -> Fraction:
        return _fraction(_eval_raw(self._p, valuation))

    def __str__(self) -> str:
        return str(self._p)

    def __repr__(self) -> str:
        return f"Polynomial({self})"


def _eval_raw(p, valuation: Valuation):
    names = p.context().names()
    if not names:
        return p.leading_coefficient() if not p.is_zero() else flint.fmpq(0)
    args = []
    for n in names:
        try:
            v = valuation[n]
        except KeyError:
            raise UnboundVariable(n) from None
        args.append(_to_fmpq(v))
    return p(*args)


class RationalFunction:
    """Canonical quotient of two polynomials (immutable, hashable)."""

    __slots__ = ("_num", "_den", "_hash")

    def __init__(self, num, den=None):
        """Build from raw fmpq_mpoly values or ``Polynomial``s; canonicalizes."""
        if isinstance(num, Polynomial):
            num = num._p
        if den is None:
            den = num.context().constant(1)
        elif isinstance(den, Polynomial):
            den = den._p
        ctx = _union_ctx(num, den)
        n, d = _canonical(_lift(num, ctx), _lift(den, ctx), reduce=True)
        self._set(n, d)

    def _set(self, n, d):
        self._num = n
        self._den = d
        self._hash = None

    @classmethod
    def _raw(cls, n, d) -> "RationalFunction":
        obj = cls.__new__(cls)
        obj._set(n, d)
        return obj

    @classmethod
    def _make(cls, n, d, reduce: bool) -> "RationalFunction":
        return cls._raw(*_canonical(n, d, reduce))

    @classmethod
    def constant(cls, c: Number) -> "RationalFunction":
        return cls._raw(_EMPTY.constant(_to_fmpq(c)), _EMPTY.constant(1))

    @classmethod
    def variable(cls, name: Union[str, Variable]) -> "RationalFunction":
        name = name.name if isinstance(name, Variable) else name
        Variable(name)
        ctx = _ctx((name,))
        return cls._raw(ctx.gens()[0], ctx.constant(1))

    # -- inspection -------------------------------------------------------
    @property
    def num(self) -> Polynomial:
        return Polynomial(self._num)

    @property
    def den(self) -> Polynomial:
        return Polynomial(self._den)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(self._num.context().names())

    def is_zero(self) -> bool:
        return self._num.is_zero()

    def is_one(self) -> bool:
        return self._den.is_one() and self._num.is_one()

    def is_constant(self) -> bool:
        return self._num.is_constant() and self._den.is_constant()

    def is_polynomial(self) -> bool:
        return self._den.is_one()

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        if self._num.is_zero():
            return Fraction(0)
        return _fraction(self._num.leading_coefficient()) / _fraction(self._den.leading_coefficient())

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return add(self, other)

    def __radd__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return add(other, self)

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return sub(self, other)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return sub(other, self)

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return mul(self, other)

    def __rmul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return mul(other, self)

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return div(self, other)

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return div(other, self)

    def __neg__(self):
        return RationalFunction._raw(-self._num, self._den)

    def __pos__(self):
        return self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return div(ONE, self) ** (-k)
        return RationalFunction._raw(self._num ** k, self._den ** k)

    # -- comparison / hashing ----------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, RationalFunction):
            other = _coerce(other)
            if other is NotImplemented:
                return other
        return (
            self._num.context() is other._num.context()
            and self._num == other._num
            and self._den == other._den
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._num.context().names(), str(self._num), str(self._den)))
        return self._hash

    def __reduce__(self):
        names = self._num.context().names()
        pack = lambda p: tuple((e, (int(c.p), int(c.q))) for e, c in p.terms())
        return (_unpickle, (names, pack(self._num), pack(self._den)))

    # -- evaluation / printing ----------------------------------------------
    def evaluate(self, valuation: Valuation) -> Fraction:
        return evaluate(self, valuation)

    def evaluate_float(self, valuation: Valuation) -> float:
        return float(evaluate(self, valuation))

    def __str__(self) -> str:
        if self._den.is_one():
            return str(self._num)
        return f"({self._num})/({self._den})"

    def __repr__(self) -> str:
        return f"RationalFunction({self})"


def _unpickle(names, num, den):
    ctx = _ctx(names)
    build = lambda items: ctx.from_dict({e: flint.fmpq(p, q) for e, (p, q) in items})
    return RationalFunction._raw(build(num), build(den))


def _canonical(n, d, reduce: bool):
    if d.is_zero():
        raise DivisionByZero("denominator is the zero polynomial")
    if n.is_zero():
        return _EMPTY.constant(0), _EMPTY.constant(1)
    if reduce and not d.is_constant() and not n.is_constant():
        g = n.gcd(d)
        if not g.is_one():
            n = n / g
            d = d / g
    if d.is_constant():
        c = d.leading_coefficient()
        if c != 1:
            n = n / c
        d = d.context().constant(1)
    else:
        c = _signed_content(d)
        if c != 1:
            n = n / c
            d = d / c
    return _compact(n, d)


def _compact(n, d):
    ctx = n.context()
    names = ctx.names()
    if not names:
        return n, d
    unused = set(n.unused_gens()) & set(d.unused_gens())
    if not unused:
        return n, d
    new = _ctx(tuple(x for x in names if x not in unused))
    return n.project_to_context(new), d.project_to_context(new)


def _coerce(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, (int, Fraction, float)):
        return RationalFunction.constant(x)
    if isinstance(x, Polynomial):
        return RationalFunction(x)
    return NotImplemented


def _unify(f: RationalFunction, g: RationalFunction):
    ctx = _union_ctx(f._num, g._num)
    return (_lift(f._num, ctx), _lift(f._den, ctx), _lift(g._num, ctx), _lift(g._den, ctx))


def add(f: RationalFunction, g: RationalFunction) -> RationalFunction:
    if f.is_zero():
        return g
    if g.is_zero():
        return f
    a, b, c, d = _unify(f, g)
    if b.is_one() and d.is_one():
        return RationalFunction._make(a + c, b, reduce=False)
    if b == d:
        return RationalFunction._make(a + c, b, reduce=True)
    # Henrici: with g = gcd(b, d) only g can share factors with the sum.
    gg = b.gcd(d) if not (b.is_constant() or d.is_constant()) else None
    if gg is None or gg.is_one():
        return RationalFunction._make(a * d + c * b, b * d, reduce=False)
    b1 = b / gg
    d1 = d / gg
    t = a * d1 + c * b1
    if t.is_zero():
        return ZERO
    g2 = t.gcd(gg)
    if g2.is_one():
        return RationalFunction._make(t, b1 * d, reduce=False)
    return RationalFunction._make(t / g2, b1 * (d / g2), reduce=False)


def sub(f: RationalFunction, g: RationalFunction) -> RationalFunction:
    return add(f, -g)


def _gcd_or_none(x, y):
    if x.is_constant() or y.is_constant():
        return None
    g = x.gcd(y)
    return None if g.is_one() else g


def mul(f: RationalFunction, g: RationalFunction) -> RationalFunction:
    if f.is_zero() or g.is_zero():
        return ZERO
    a, b, c, d = _unify(f, g)
    g1 = _gcd_or_none(a, d)
    g2 = _gcd_or_none(c, b)
    if g1 is not None:
        a, d = a / g1, d / g1
    if g2 is not None:
        c, b = c / g2, b / g2
    return RationalFunction._make(a * c, b * d, reduce=False)


def div(f: RationalFunction, g: RationalFunction) -> RationalFunction:
    if g.is_zero():
        raise DivisionByZero(f"division of {f} by zero")
    return mul(f, RationalFunction._make(g._den, g._num, reduce=False))


def simplify(f: RationalFunction) -> RationalFunction:
    """Return the canonical form (values are kept canonical, so this re-derives it)."""
    return RationalFunction._make(f._num, f._den, reduce=True)


def evaluate(f: RationalFunction, valuation: Valuation) -> Fraction:
    d = _eval_raw(f._den, valuation)
    if d == 0:
        raise DenominatorZeroAtPoint(f"denominator of {f} vanishes at the given point")
    return _fraction(_eval_raw(f._num, valuation) / d)


def evaluate_float(f: RationalFunction, valuation: Valuation) -> float:
    return float(evaluate(f, valuation))


def substitute(f: RationalFunction, mapping: Mapping[str, RationalFunction]) -> RationalFunction:
    """Replace variables by rational functions; unmapped variables stay."""
    names = f._num.context().names()
    if not any(n in mapping for n in names):
        return f
    targets = [_coerce(mapping[n]) if n in mapping else RationalFunction.variable(n) for n in names]
    ctx = _union_ctx(*(t._num for t in targets)) if targets else _EMPTY
    if all(t.is_polynomial() for t in targets):
        polys = [_lift(t._num, ctx) for t in targets]
        return RationalFunction._make(
            f._num.compose(*polys, ctx=ctx), f._den.compose(*polys, ctx=ctx), reduce=True
        )
    # Homogenize: multiply num and den by prod(b_i^D_i) with D_i the maximal
    # degree of variable i, so each term becomes a polynomial in a_i, b_i.
    nums = [_lift(t._num, ctx) for t in targets]
    dens = [_lift(t._den, ctx) for t in targets]
    degs = [max(x, y) for x, y in zip(f._num.degrees(), f._den.degrees())]
    cache: dict = {}

    def power(kind, i, e):
        key = (kind, i, e)
        if key not in cache:
            cache[key] = (nums if kind == 0 else dens)[i] ** e
        return cache[key]

    def expand(p):
        acc = ctx.constant(0)
        for exps, c in p.terms():
            term = ctx.constant(c)
            for i, e in enumerate(exps):
                if e:
                    term *= power(0, i, e)
                if degs[i] - e:
                    term *= power(1, i, degs[i] - e)
            acc += term
        return acc

    return RationalFunction._make(expand(f._num), expand(f._den), reduce=True)


def op_count(f: RationalFunction) -> int:
    """Arithmetic operations in the canonical printed form.

    Per polynomial: one addition/subtraction between consecutive terms; per
    term, one multiplication between consecutive factors (each variable is a
    factor, a coefficient other than +-1 is a factor) and one exponentiation
    per variable raised to a power above 1.  Rational literals and a leading
    minus sign cost nothing.  One division when the denominator is not 1.
    """
    total = _poly_ops(f._num)
    if not f._den.is_one():
        total += _poly_ops(f._den) + 1
    return total


def _poly_ops(p) -> int:
    if p.is_zero():
        return 0
    ops = len(p) - 1
    for exps, c in p.terms():
        nvars = sum(1 for e in exps if e)
        npow = sum(1 for e in exps if e > 1)
        factors = nvars + (1 if nvars and c != 1 and c != -1 else 0)
        ops += max(factors - 1, 0) + npow
    return ops


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", n))
    return out


class _ExprParser:
    def __init__(self, text: str, resolve=None):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.resolve = resolve or RationalFunction.variable

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise ParseError(f"expected {value!r}, found {t[1] or 'end of input'!r}", self.text, t[2])
        return t

    def parse(self) -> RationalFunction:
        f = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", self.text, t[2])
        return f

    def expr(self):
        f = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            g = self.term()
            f = f + g if op == "+" else f - g
        return f

    def term(self):
        f = self.unary()
        while self.peek()[1] in ("*", "/"):
            op, _, pos = self.take()[1], None, self.toks[self.i - 1][2]
            g = self.unary()
            if op == "*":
                f = f * g
            else:
                if g.is_zero():
                    raise DivisionByZero(f"division by zero at offset {pos}")
                f = f / g
        return f

    def unary(self):
        t = self.peek()
        if t[1] == "-":
            self.take()
            return -self.unary()
        if t[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            neg = False
            paren = False
            if self.peek()[1] == "(":
                self.take()
                paren = True
            if self.peek()[1] == "-":
                self.take()
                neg = True
            t = self.take()
            if t[0] != "num" or not t[1].isdigit():
                raise ParseError("exponent must be an integer literal", self.text, t[2])
            if paren:
                self.expect(")")
            k = int(t[1])
            if neg:
                if base.is_zero():
                    raise DivisionByZero("zero raised to a negative power")
                k = -k
            if self.peek()[1] in ("^", "**"):
                raise ParseError("chained exponents are not supported", self.text, self.peek()[2])
            return base ** k
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return RationalFunction.constant(Fraction(val))
        if kind == "id":
            return self.resolve(val)
        if val == "(":
            f = self.expr()
            self.expect(")")
            return f
        raise ParseError(f"unexpected {val or 'end of input'!r}", self.text, pos)


def parse_expression(text: str) -> RationalFunction:
    """Parse an arithmetic expression into canonical form."""
    return _ExprParser(text).parse()


def var(name: str) -> RationalFunction:
    return RationalFunction.variable(name)


def const(c: Number) -> RationalFunction:
    return RationalFunction.constant(c)


def product(items: Iterable[RationalFunction]) -> RationalFunction:
    acc = ONE
    for x in items:
        acc = acc * x
    return acc


def total(items: Iterable[RationalFunction]) -> RationalFunction:
    acc = ZERO
    for x in items:
        acc = acc + x
    return acc


ZERO = RationalFunction.constant(0)
ONE = RationalFunction.constant(1)
