"""Terms, constructible functions, and their little surface language.

Field-valued terms (`DTerm`) are built from variables and rationals by
ring operations, inversion with the 0 -> 0 convention, one-variable
polynomials over an inner term, and truncated power series restricted to
the unit polydisc. Constructible functions are rational combinations of
valuations v(h) and norms abs(h) of such terms.

Surface syntax (whitespace-insensitive, '#' starts a line comment):

    expr   := sum
    sum    := prod (('+'|'-') prod)*
    prod   := unary ('*' unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    atom   := rational | 'x'<nat> | 'inv(' sum ')' | 'v(' sum ')'
            | 'abs(' sum ')' | series | '(' sum ')'
    series := 'series(' '[' rational (',' rational)* (';' 'tail' int)? ']'
              (',' sum)+ ')'

Exponents are naturals, or a parenthesised signed rational on abs(...)
factors. v() and abs() live at the constructible level only; a bare
field-valued term is not a constructible function. Parsing collapses
single-base polynomial combinations into `Poly` nodes, so printing
followed by parsing is the identity on canonically built terms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from . import polys
from .padic import INF, PAdicScalar, Prime, rational_valuation


class DTerm:
    """Base class for field-valued terms."""

    __slots__ = ()


@dataclass(frozen=True)
class Var(DTerm):
    index: int


@dataclass(frozen=True)
class Const(DTerm):
    value: Fraction


@dataclass(frozen=True)
class Add(DTerm):
    left: DTerm
    right: DTerm


@dataclass(frozen=True)
class Mul(DTerm):
    left: DTerm
    right: DTerm


@dataclass(frozen=True)
class Neg(DTerm):
    arg: DTerm


@dataclass(frozen=True)
class Inv(DTerm):
    """Multiplicative inverse with Inv(0) = 0."""

    arg: DTerm


@dataclass(frozen=True)
class Poly(DTerm):
    """coeffs[i] * argument^i, coefficients exact rationals."""

    coeffs: tuple[Fraction, ...]
    argument: DTerm


@dataclass(frozen=True)
class RestrictedSeries(DTerm):
    """Truncated power series, zero outside the unit polydisc.

    coeffs lists the kept coefficients degree by degree (lexicographic
    within a degree for several arguments); every omitted coefficient has
    valuation >= tail_valuation, which is what makes truncated evaluation
    meaningful.
    """

    coeffs: tuple[Fraction, ...]
    tail_valuation: int
    arguments: tuple[DTerm, ...]

    def __post_init__(self) -> None:
        if not self.arguments:
            raise ValueError("a restricted series needs at least one argument")


# ---------------------------------------------------------------------------
# canonicalizing constructors

def _poly_view(t: DTerm) -> tuple[DTerm | None, polys.PolyQ]:
    """View a term as a polynomial in a base term (None = constant)."""
    if isinstance(t, Const):
        return None, ((t.value,) if t.value != 0 else ())
    if isinstance(t, Poly):
        return t.argument, t.coeffs
    return t, (Fraction(0), Fraction(1))


def _from_view(base: DTerm | None, coeffs: polys.PolyQ) -> DTerm:
    coeffs = polys.normalize(coeffs)
    if base is None or len(coeffs) <= 1:
        return Const(coeffs[0] if coeffs else Fraction(0))
    if coeffs == (Fraction(0), Fraction(1)):
        return base
    return Poly(coeffs, base)


def poly_of(coeffs, argument: DTerm) -> DTerm:
    """Canonical polynomial in `argument`; folds constants and composes
    with an inner Poly so nested single-base polynomials never stack."""
    cs = polys.poly_from(coeffs)
    if isinstance(argument, Const):
        return Const(polys.evaluate(cs, argument.value))
    if isinstance(argument, Poly):
        acc: polys.PolyQ = ()
        power: polys.PolyQ = (Fraction(1),)
        for c in cs:
            acc = polys.add(acc, polys.scale(power, c))
            power = polys.mul(power, argument.coeffs)
        return _from_view(argument.argument, acc)
    return _from_view(argument, cs)


def d_const(x) -> Const:
    return Const(Fraction(x))


def d_add(a: DTerm, b: DTerm) -> DTerm:
    ba, ca = _poly_view(a)
    bb, cb = _poly_view(b)
    if ba is None and bb is None:
        return _from_view(None, polys.add(ca, cb))
    if ba is None:
        return _from_view(bb, polys.add(cb, ca))
    if bb is None or ba == bb:
        return _from_view(ba, polys.add(ca, cb))
    return Add(a, b)


def d_neg(a: DTerm) -> DTerm:
    base, cs = _poly_view(a)
    return _from_view(base, polys.neg(cs))


def d_sub(a: DTerm, b: DTerm) -> DTerm:
    return d_add(a, d_neg(b))


def d_mul(a: DTerm, b: DTerm) -> DTerm:
    ba, ca = _poly_view(a)
    bb, cb = _poly_view(b)
    if ba is None and bb is None:
        return _from_view(None, polys.mul(ca, cb))
    if ba is None:
        return _from_view(bb, polys.mul(cb, ca))
    if bb is None or ba == bb:
        return _from_view(ba, polys.mul(ca, cb))
    return Mul(a, b)


def d_pow(a: DTerm, e: int) -> DTerm:
    if e < 0:
        raise ValueError("negative powers are written with inv()")
    base, cs = _poly_view(a)
    return _from_view(base, polys.pow_int(cs, e))


def d_inv(a: DTerm) -> DTerm:
    if isinstance(a, Const):
        return Const(Fraction(0) if a.value == 0 else 1 / a.value)
    return Inv(a)


def d_scale(a: DTerm, c) -> DTerm:
    return d_mul(Const(Fraction(c)), a)


def free_variables(t: DTerm) -> frozenset[int]:
    if isinstance(t, Var):
        return frozenset({t.index})
    if isinstance(t, Const):
        return frozenset()
    if isinstance(t, (Add, Mul)):
        return free_variables(t.left) | free_variables(t.right)
    if isinstance(t, (Neg, Inv)):
        return free_variables(t.arg)
    if isinstance(t, Poly):
        return free_variables(t.argument)
    if isinstance(t, RestrictedSeries):
        out: frozenset[int] = frozenset()
        for a in t.arguments:
            out |= free_variables(a)
        return out
    raise TypeError(f"not a DTerm: {t!r}")


def as_poly_in(t: DTerm, var: int) -> list[DTerm] | None:
    """Coefficients of t as a polynomial in x_var, or None when t is not
    polynomial in that variable (it hides inside inv or a series)."""
    if var not in free_variables(t):
        return [t]
    if isinstance(t, Var):
        return [Const(Fraction(0)), Const(Fraction(1))]
    if isinstance(t, Add):
        la, lb = as_poly_in(t.left, var), as_poly_in(t.right, var)
        if la is None or lb is None:
            return None
        out = [Const(Fraction(0))] * max(len(la), len(lb))
        for i, c in enumerate(la):
            out[i] = d_add(out[i], c)
        for i, c in enumerate(lb):
            out[i] = d_add(out[i], c)
        return out
    if isinstance(t, Neg):
        inner = as_poly_in(t.arg, var)
        return None if inner is None else [d_neg(c) for c in inner]
    if isinstance(t, Mul):
        la, lb = as_poly_in(t.left, var), as_poly_in(t.right, var)
        if la is None or lb is None:
            return None
        out = [Const(Fraction(0))] * (len(la) + len(lb) - 1)
        for i, a in enumerate(la):
            for j, b in enumerate(lb):
                out[i + j] = d_add(out[i + j], d_mul(a, b))
        return out
    if isinstance(t, Poly):
        inner = as_poly_in(t.argument, var)
        if inner is None:
            return None
        out: list[DTerm] = [Const(Fraction(0))]
        power: list[DTerm] = [Const(Fraction(1))]
        for c in t.coeffs:
            for i, q in enumerate(power):
                if i == len(out):
                    out.append(Const(Fraction(0)))
                out[i] = d_add(out[i], d_scale(q, c))
            new_power = [Const(Fraction(0))] * (len(power) + len(inner) - 1)
            for i, a in enumerate(power):
                for j, b in enumerate(inner):
                    new_power[i + j] = d_add(new_power[i + j], d_mul(a, b))
            power = new_power
        return out
    return None


def dterm_to_const_poly(t: DTerm, var: int = 0) -> polys.PolyQ | None:
    """Constant-coefficient polynomial view in x_var, if t has one."""
    extra = free_variables(t) - {var}
    if extra:
        return None
    coeffs = as_poly_in(t, var)
    if coeffs is None:
        return None
    out = []
    for c in coeffs:
        if not isinstance(c, Const):
            return None
        out.append(c.value)
    return polys.poly_from(out)


# ---------------------------------------------------------------------------
# evaluation

class EvaluationPrecisionError(ArithmeticError):
    """A truncated series does not pin the quantity down far enough."""


class VFactorZeroError(ZeroDivisionError):
    """v(h) was requested where h evaluates to exactly zero."""


def _series_exponents(nargs: int, count: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    total = 0
    while len(out) < count:
        for combo in _compositions(total, nargs):
            out.append(combo)
            if len(out) == count:
                break
        total += 1
    return out


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def _low_val(value: Fraction, err, p: int):
    """Lower bound on the valuation of the true quantity."""
    return min(rational_valuation(value, p), err)


def _eval(t: DTerm, vals: tuple[Fraction, ...], p: int) -> tuple[Fraction, float | int]:
    if isinstance(t, Const):
        return t.value, INF
    if isinstance(t, Var):
        if t.index >= len(vals):
            raise ValueError(f"point has no coordinate for x{t.index}")
        return vals[t.index], INF
    if isinstance(t, Add):
        a, ea = _eval(t.left, vals, p)
        b, eb = _eval(t.right, vals, p)
        return a + b, min(ea, eb)
    if isinstance(t, Neg):
        a, ea = _eval(t.arg, vals, p)
        return -a, ea
    if isinstance(t, Mul):
        a, ea = _eval(t.left, vals, p)
        b, eb = _eval(t.right, vals, p)
        err = min(_low_val(a, ea, p) + eb, ea + _low_val(b, eb, p))
        return a * b, err
    if isinstance(t, Inv):
        a, ea = _eval(t.arg, vals, p)
        if ea == INF:
            return (Fraction(0) if a == 0 else 1 / a), INF
        va = rational_valuation(a, p)
        if va >= ea:
            raise EvaluationPrecisionError(
                "inverse of a quantity not separated from zero at this precision"
            )
        return 1 / a, ea - 2 * va
    if isinstance(t, Poly):
        x, ex = _eval(t.argument, vals, p)
        acc, eacc = Fraction(0), INF
        for c in reversed(t.coeffs):
            err = min(_low_val(acc, eacc, p) + ex, eacc + _low_val(x, ex, p))
            acc = acc * x + c
            eacc = err
        return acc, eacc
    if isinstance(t, RestrictedSeries):
        return _eval_series(t, vals, p)
    raise TypeError(f"not a DTerm: {t!r}")


def _eval_series(t: RestrictedSeries, vals, p):
    args = [_eval(a, vals, p) for a in t.arguments]
    for a, ea in args:
        va = rational_valuation(a, p)
        if min(va, ea) >= 0:
            continue
        if va < 0 and va < ea:
            return Fraction(0), INF  # certainly outside the unit polydisc
        raise EvaluationPrecisionError(
            "cannot decide unit-polydisc membership at this precision"
        )
    exps = _series_exponents(len(t.arguments), len(t.coeffs))
    total = Fraction(0)
    for c, alpha in zip(t.coeffs, exps):
        if c == 0:
            continue
        mono = c
        for (a, _), e in zip(args, alpha):
            mono *= a**e
        total += mono
    err: float | int = t.tail_valuation
    inexact = [ea for _, ea in args if ea != INF]
    if inexact:
        cmin = min(
            [t.tail_valuation] + [rational_valuation(c, p) for c in t.coeffs if c != 0]
        )
        err = min(err, min(inexact) + cmin)
    return total, err


def eval_dterm(
    t: DTerm, point: list[PAdicScalar], prime: Prime | None = None
) -> tuple[PAdicScalar, float | int]:
    """Evaluate a term at a point of Q_p^m.

    Returns (value, error_valuation): the true value differs from the
    returned one by something of valuation >= error_valuation, with INF
    meaning the evaluation is exact. Only restricted series introduce
    uncertainty.
    """
    if prime is None:
        if not point:
            raise ValueError("prime must be given when the point is empty")
        prime = point[0].prime
    vals = tuple(s.value for s in point)
    value, err = _eval(t, vals, prime.p)
    return PAdicScalar(value, prime), err


# ---------------------------------------------------------------------------
# constructible functions

@dataclass(frozen=True)
class ValFactor:
    h: DTerm
    power: int


@dataclass(frozen=True)
class NormFactor:
    # Fractional powers arise from closed-form sums over cosets; their
    # evaluation insists on an integer total exponent.
    h: DTerm
    power: Fraction


@dataclass(frozen=True)
class CTerm:
    coeff: Fraction
    val_factors: tuple[ValFactor, ...]
    norm_factors: tuple[NormFactor, ...]


@dataclass(frozen=True)
class ConstructibleExpr:
    """Finite sum of rational multiples of products v(h)^k * abs(h')^e."""

    terms: tuple[CTerm, ...]

    @staticmethod
    def of(terms) -> "ConstructibleExpr":
        merged: dict = {}
        for term in terms:
            vals: dict[DTerm, int] = {}
            for f in term.val_factors:
                vals[f.h] = vals.get(f.h, 0) + f.power
            norms: dict[DTerm, Fraction] = {}
            for f in term.norm_factors:
                norms[f.h] = norms.get(f.h, Fraction(0)) + f.power
            vf = tuple(
                ValFactor(h, e)
                for h, e in sorted(vals.items(), key=lambda kv: print_dterm(kv[0]))
                if e != 0
            )
            nf = tuple(
                NormFactor(h, e)
                for h, e in sorted(norms.items(), key=lambda kv: print_dterm(kv[0]))
                if e != 0
            )
            key = (vf, nf)
            merged[key] = merged.get(key, Fraction(0)) + term.coeff
        out = tuple(
            CTerm(c, vf, nf)
            for (vf, nf), c in sorted(
                merged.items(), key=lambda kv: _cterm_sort_key(kv[0])
            )
            if c != 0
        )
        return ConstructibleExpr(out)

    @staticmethod
    def const(x) -> "ConstructibleExpr":
        x = Fraction(x)
        if x == 0:
            return ConstructibleExpr(())
        return ConstructibleExpr((CTerm(x, (), ()),))

    @staticmethod
    def zero() -> "ConstructibleExpr":
        return ConstructibleExpr(())

    def is_zero(self) -> bool:
        return not self.terms

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and not self.terms[0].val_factors and not self.terms[0].norm_factors:
            return self.terms[0].coeff
        raise ValueError("expression is not a constant")

    def __add__(self, other: "ConstructibleExpr") -> "ConstructibleExpr":
        return ConstructibleExpr.of(self.terms + other.terms)

    def scale(self, c) -> "ConstructibleExpr":
        c = Fraction(c)
        if c == 0:
            return ConstructibleExpr(())
        return ConstructibleExpr.of(
            CTerm(t.coeff * c, t.val_factors, t.norm_factors) for t in self.terms
        )

    def __mul__(self, other: "ConstructibleExpr") -> "ConstructibleExpr":
        out = []
        for a in self.terms:
            for b in other.terms:
                out.append(
                    CTerm(
                        a.coeff * b.coeff,
                        a.val_factors + b.val_factors,
                        a.norm_factors + b.norm_factors,
                    )
                )
        return ConstructibleExpr.of(out)


def _cterm_sort_key(key):
    vf, nf = key
    return (
        tuple((print_dterm(f.h), f.power) for f in vf),
        tuple((print_dterm(f.h), f.power) for f in nf),
    )


def cexpr_term(coeff, val_factors=(), norm_factors=()) -> ConstructibleExpr:
    return ConstructibleExpr.of(
        [CTerm(Fraction(coeff), tuple(val_factors), tuple(norm_factors))]
    )


def eval_constructible(
    f: ConstructibleExpr, point: list[PAdicScalar], prime: Prime | None = None
) -> Fraction:
    """Exact rational value of a constructible function at a point.

    Errors when some v-factor argument vanishes, or when series
    truncation leaves a needed valuation or norm undetermined.
    """
    if prime is None:
        if not point:
            raise ValueError("prime must be given when the point is empty")
        prime = point[0].prime
    p = prime.p
    vals = tuple(s.value for s in point)
    total = Fraction(0)
    for term in f.terms:
        acc = term.coeff
        for vf in term.val_factors:
            value, err = _eval(vf.h, vals, p)
            v = rational_valuation(value, p)
            if value == 0 and err == INF:
                raise VFactorZeroError("v() of an exact zero inside a constructible term")
            if v >= err:
                raise EvaluationPrecisionError("valuation undetermined at this precision")
            acc *= Fraction(v) ** vf.power
        for nf in term.norm_factors:
            value, err = _eval(nf.h, vals, p)
            v = rational_valuation(value, p)
            if value == 0 and err == INF:
                if nf.power < 0:
                    raise ZeroDivisionError("negative power of the norm of zero")
                acc = Fraction(0)
                continue
            if v >= err:
                raise EvaluationPrecisionError("norm undetermined at this precision")
            e = nf.power * v
            if e.denominator != 1:
                raise ValueError(
                    "fractional norm power does not give an integer exponent here"
                )
            acc *= Fraction(p) ** (-int(e))
        total += acc
    return total


def max_variable_index(f: ConstructibleExpr) -> int:
    """Largest variable index appearing, -1 for a constant."""
    out = -1
    for term in f.terms:
        for fac in term.val_factors + term.norm_factors:
            for i in free_variables(fac.h):
                out = max(out, i)
    return out


# ---------------------------------------------------------------------------
# printing

_ATOM, _POW, _UNARY, _MUL, _ADD = 5, 4, 3, 2, 1


def _render(t: DTerm) -> tuple[str, int]:
    if isinstance(t, Var):
        return f"x{t.index}", _ATOM
    if isinstance(t, Const):
        s = str(t.value)
        return s, (_UNARY if t.value < 0 else _ATOM)
    if isinstance(t, Inv):
        return f"inv({_render(t.arg)[0]})", _ATOM
    if isinstance(t, RestrictedSeries):
        cs = ", ".join(str(c) for c in t.coeffs)
        args = ", ".join(_render(a)[0] for a in t.arguments)
        return f"series([{cs}; tail {t.tail_valuation}], {args})", _ATOM
    if isinstance(t, Neg):
        inner, prec = _render(t.arg)
        if prec < _UNARY:
            inner = f"({inner})"
        return f"-{inner}", _UNARY
    if isinstance(t, Add):
        left, lp = _render(t.left)
        if lp < _ADD:
            left = f"({left})"
        if isinstance(t.right, Neg):
            right, rp = _render(t.right.arg)
            if rp <= _ADD:
                right = f"({right})"
            return f"{left} - {right}", _ADD
        right, rp = _render(t.right)
        # a sum-shaped or signed right operand would reassociate bare
        if rp <= _ADD or right.startswith("-"):
            right = f"({right})"
        return f"{left} + {right}", _ADD
    if isinstance(t, Mul):
        left, lp = _render(t.left)
        if lp < _MUL:
            left = f"({left})"
        right, rp = _render(t.right)
        # a signed or product-shaped right operand would reassociate bare
        if rp <= _MUL or right.startswith("-"):
            right = f"({right})"
        return f"{left}*{right}", _MUL
    if isinstance(t, Poly):
        return _render_poly(t)
    raise TypeError(f"not a DTerm: {t!r}")


def _render_poly(t: Poly) -> tuple[str, int]:
    base, bprec = _render(t.argument)
    if bprec < _ATOM:
        base = f"({base})"
    pieces: list[tuple[int, Fraction]] = [
        (i, c) for i, c in enumerate(t.coeffs) if c != 0
    ]
    pieces.reverse()
    chunks: list[str] = []
    for idx, (i, c) in enumerate(pieces):
        mag = abs(c)
        if i == 0:
            body = str(mag)
        else:
            powed = base if i == 1 else f"{base}^{i}"
            body = powed if mag == 1 else f"{mag}*{powed}"
        if idx == 0:
            chunks.append(f"-{body}" if c < 0 else body)
        else:
            chunks.append(f" - {body}" if c < 0 else f" + {body}")
    text = "".join(chunks)
    if len(pieces) > 1:
        return text, _ADD
    c = pieces[0][1]
    if c < 0:
        return text, _UNARY
    return text, (_MUL if abs(c) != 1 or pieces[0][0] == 0 else _POW)


def print_dterm(t: DTerm) -> str:
    return _render(t)[0]


def _render_exponent(e: Fraction) -> str:
    if e.denominator == 1 and e >= 0:
        return f"^{e.numerator}" if e != 1 else ""
    return f"^({e})"


def print_constructible(f: ConstructibleExpr) -> str:
    if not f.terms:
        return "0"
    chunks: list[str] = []
    for idx, term in enumerate(f.terms):
        factors = [f"v({print_dterm(vf.h)})" + _render_exponent(Fraction(vf.power))
                   for vf in term.val_factors]
        factors += [f"abs({print_dterm(nf.h)})" + _render_exponent(nf.power)
                    for nf in term.norm_factors]
        mag = abs(term.coeff)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(mag)] + factors)
        if idx == 0:
            chunks.append(f"-{body}" if term.coeff < 0 else body)
        else:
            chunks.append(f" - {body}" if term.coeff < 0 else f" + {body}")
    return "".join(chunks)


# ---------------------------------------------------------------------------
# parsing

@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{message} (at characters {span.start}..{span.end})")
        self.message = message
        self.span = span


_KEYWORDS = {"inv", "v", "abs", "series", "tail"}
_PUNCT = set("+-*^()[],;/")


def _tokenize(text: str):
    tokens: list[tuple[str, object, int, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("INT", int(text[i:j]), i, j))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word in _KEYWORDS:
                tokens.append(("NAME", word, i, j))
            elif word[0] == "x" and word[1:].isdigit():
                tokens.append(("VAR", int(word[1:]), i, j))
            else:
                raise ParseError(f"unknown name '{word}'", SourceSpan(i, j))
            i = j
            continue
        if ch in _PUNCT:
            tokens.append((ch, ch, i, i + 1))
            i += 1
            continue
        raise ParseError(f"unexpected character '{ch}'", SourceSpan(i, i + 1))
    tokens.append(("EOF", None, n, n))
    return tokens


# Parsed fragments: ("dterm", t) for field-valued pieces, ("expr", e) once
# v()/abs() has entered, plus transient ("vfac", h) / ("absfac", h).
_Frag = tuple[str, object]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ParseError(
                f"expected {kind}, found {tok[0]}", SourceSpan(tok[2], tok[3])
            )
        self.pos += 1
        return tok

    def span(self):
        tok = self.peek()
        return SourceSpan(tok[2], tok[3])

    # --- fragments ---------------------------------------------------

    def parse_sum(self) -> _Frag:
        acc = self.parse_prod()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.parse_prod()
            if op == "-":
                rhs = self._neg(rhs)
            acc = self._add(acc, rhs)
        return acc

    def parse_prod(self) -> _Frag:
        acc = self.parse_unary()
        while self.peek()[0] == "*":
            self.take()
            acc = self._mul(acc, self.parse_unary())
        return acc

    def parse_unary(self) -> _Frag:
        if self.peek()[0] == "-":
            self.take()
            return self._neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> _Frag:
        atom = self.parse_atom()
        if self.peek()[0] != "^":
            return self._settle(atom)
        start = self.span()
        self.take()
        e = self._parse_exponent()
        kind, payload = atom
        if kind == "vfac":
            if e.denominator != 1 or e < 0:
                raise ParseError("valuation factors take natural powers", start)
            return ("expr", cexpr_term(1, [ValFactor(payload, int(e))] if e else []))
        if kind == "absfac":
            return ("expr", cexpr_term(1, [], [NormFactor(payload, e)] if e else []))
        if e.denominator != 1 or e < 0:
            raise ParseError("only abs() factors take signed or fractional powers", start)
        if kind == "dterm":
            return ("dterm", d_pow(payload, int(e)))
        out = ConstructibleExpr.const(1)
        for _ in range(int(e)):
            out = out * payload
        return ("expr", out)

    def _parse_exponent(self) -> Fraction:
        tok = self.peek()
        if tok[0] == "INT":
            self.take()
            return Fraction(tok[1])
        if tok[0] == "(":
            self.take()
            sign = 1
            if self.peek()[0] == "-":
                self.take()
                sign = -1
            num = self.take("INT")[1]
            den = 1
            if self.peek()[0] == "/":
                self.take()
                den = self.take("INT")[1]
            self.take(")")
            return Fraction(sign * num, den)
        raise ParseError("expected an exponent", self.span())

    def parse_atom(self) -> _Frag:
        tok = self.peek()
        if tok[0] == "INT":
            return ("dterm", Const(self._parse_rational()))
        if tok[0] == "VAR":
            self.take()
            return ("dterm", Var(tok[1]))
        if tok[0] == "(":
            self.take()
            inner = self.parse_sum()
            self.take(")")
            return inner
        if tok[0] == "NAME":
            name = tok[1]
            if name == "inv":
                self.take()
                self.take("(")
                arg = self._dterm(self.parse_sum(), "inv")
                self.take(")")
                return ("dterm", d_inv(arg))
            if name == "v":
                self.take()
                self.take("(")
                arg = self._dterm(self.parse_sum(), "v")
                self.take(")")
                return ("vfac", arg)
            if name == "abs":
                self.take()
                self.take("(")
                arg = self._dterm(self.parse_sum(), "abs")
                self.take(")")
                return ("absfac", arg)
            if name == "series":
                return ("dterm", self._parse_series())
        raise ParseError("expected a term", self.span())

    def _parse_rational(self) -> Fraction:
        num = self.take("INT")[1]
        if self.peek()[0] == "/":
            self.take()
            den = self.take("INT")[1]
            if den == 0:
                raise ParseError("zero denominator", self.span())
            return Fraction(num, den)
        return Fraction(num)

    def _parse_signed_rational(self) -> Fraction:
        sign = 1
        if self.peek()[0] == "-":
            self.take()
            sign = -1
        return sign * self._parse_rational()

    def _parse_signed_int(self) -> int:
        sign = 1
        if self.peek()[0] == "-":
            self.take()
            sign = -1
        return sign * self.take("INT")[1]

    def _parse_series(self) -> RestrictedSeries:
        self.take("NAME")
        self.take("(")
        self.take("[")
        coeffs = [self._parse_signed_rational()]
        while self.peek()[0] == ",":
            self.take()
            coeffs.append(self._parse_signed_rational())
        tail = 0
        if self.peek()[0] == ";":
            self.take()
            word = self.take("NAME")
            if word[1] != "tail":
                raise ParseError("expected 'tail'", SourceSpan(word[2], word[3]))
            tail = self._parse_signed_int()
        self.take("]")
        args = []
        while self.peek()[0] == ",":
            self.take()
            args.append(self._dterm(self.parse_sum(), "series"))
        self.take(")")
        if not args:
            raise ParseError("series needs at least one argument", self.span())
        return RestrictedSeries(tuple(coeffs), tail, tuple(args))

    # --- fragment algebra ---------------------------------------------

    def _settle(self, frag: _Frag) -> _Frag:
        kind, payload = frag
        if kind == "vfac":
            return ("expr", cexpr_term(1, [ValFactor(payload, 1)]))
        if kind == "absfac":
            return ("expr", cexpr_term(1, [], [NormFactor(payload, Fraction(1))]))
        return frag

    def _dterm(self, frag: _Frag, where: str) -> DTerm:
        kind, payload = frag
        if kind != "dterm":
            raise ParseError(
                f"{where}() takes a field-valued term, not a constructible function",
                self.span(),
            )
        return payload

    def _coerce_expr(self, frag: _Frag) -> ConstructibleExpr:
        kind, payload = self._settle(frag)
        if kind == "expr":
            return payload
        if isinstance(payload, Const):
            return ConstructibleExpr.const(payload.value)
        raise ParseError(
            "field-valued term used outside v() or abs()", self.span()
        )

    def _add(self, a: _Frag, b: _Frag) -> _Frag:
        a, b = self._settle(a), self._settle(b)
        if a[0] == "dterm" and b[0] == "dterm":
            return ("dterm", d_add(a[1], b[1]))
        return ("expr", self._coerce_expr(a) + self._coerce_expr(b))

    def _mul(self, a: _Frag, b: _Frag) -> _Frag:
        a, b = self._settle(a), self._settle(b)
        if a[0] == "dterm" and b[0] == "dterm":
            return ("dterm", d_mul(a[1], b[1]))
        return ("expr", self._coerce_expr(a) * self._coerce_expr(b))

    def _neg(self, a: _Frag) -> _Frag:
        a = self._settle(a)
        if a[0] == "dterm":
            return ("dterm", d_neg(a[1]))
        return ("expr", a[1].scale(-1))


def parse_dterm(text: str) -> DTerm:
    p = _Parser(text)
    frag = p.parse_sum()
    tok = p.peek()
    if tok[0] != "EOF":
        raise ParseError("trailing input", SourceSpan(tok[2], tok[3]))
    if frag[0] != "dterm":
        raise ParseError(
            "v() and abs() build constructible functions, not terms",
            SourceSpan(0, len(text)),
        )
    return frag[1]


def parse_constructible(text: str) -> ConstructibleExpr:
    p = _Parser(text)
    frag = p.parse_sum()
    tok = p.peek()
    if tok[0] != "EOF":
        raise ParseError("trailing input", SourceSpan(tok[2], tok[3]))
    return p._coerce_expr(frag)
