"""Closed forms for progression sums  sum k^l t^k  over k = r mod n.

The substitution k = k0 + n*j turns every instance into combinations of
S_i(u, J) = sum_{j=0..J} j^i u^j with u = t^n. Those come from repeated
application of u*d/du to the geometric series: S_i over all j >= 0 is
N_i(u)/(1-u)^(i+1) with polynomial numerators N_i, finite ranges follow
by subtracting a shifted tail, and u = 1 degenerates to the Faulhaber
polynomials. Everything is exact rational arithmetic; convergence of
infinite ranges means |u| < 1 as a real number and is decided exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import sympy

from . import polys
from .padic import INF

NEG_INF = float("-inf")


class DivergentSumError(ArithmeticError):
    """Infinite range with ratio not inside the unit interval."""


@dataclass(frozen=True)
class ProgressionSum:
    """sum of k^l * t^k over k_min <= k <= k_max with k = residue mod modulus."""

    l: int
    t: Fraction
    residue: int = 0
    modulus: int = 1
    k_min: int = 0
    k_max: int | float = INF

    def __post_init__(self) -> None:
        if self.l < 0:
            raise ValueError("the power l must be >= 0")
        if self.modulus < 1:
            raise ValueError("modulus must be >= 1")
        if not 0 <= self.residue < self.modulus:
            raise ValueError("residue outside 0..modulus-1")
        if self.k_min == NEG_INF or self.k_min == INF:
            raise ValueError("k_min must be a finite integer")
        if self.t == 0:
            raise ValueError("zero ratio")


@lru_cache(maxsize=None)
def _numerators(i: int) -> polys.PolyQ:
    """N_i with sum_{j>=0} j^i u^j = N_i(u) / (1-u)^(i+1)."""
    if i == 0:
        return (Fraction(1),)
    prev = _numerators(i - 1)
    one_minus_u = (Fraction(1), Fraction(-1))
    u = (Fraction(0), Fraction(1))
    inner = polys.add(polys.mul(polys.derivative(prev), one_minus_u),
                      polys.scale(prev, Fraction(i)))
    return polys.mul(u, inner)


def full_sum(i: int, u: Fraction) -> Fraction:
    """sum_{j>=0} j^i u^j for |u| < 1."""
    if not abs(u) < 1:
        raise DivergentSumError("ratio outside the open unit interval")
    return polys.evaluate(_numerators(i), u) / (1 - u) ** (i + 1)


def window_coeffs(i: int, u: Fraction) -> polys.PolyQ:
    """T with sum_{j=x..y} j^i u^j = u^x*T(x) - u^(y+1)*T(y+1), any u != 1.

    The identity is between rational functions of u, so it needs no
    convergence; only the one-sided tail reading requires |u| < 1."""
    if u == 1:
        raise ValueError("u = 1 follows the Faulhaber route instead")
    out: polys.PolyQ = ()
    for m in range(i + 1):
        fm = polys.evaluate(_numerators(m), u) / (1 - u) ** (m + 1)
        term = [Fraction(0)] * (i - m) + [Fraction(comb(i, m)) * fm]
        out = polys.add(out, tuple(term))
    return out


def tail_coeffs(i: int, u: Fraction) -> polys.PolyQ:
    """T with sum_{j>=x} j^i u^j = u^x * T(x), as a polynomial in x.

    Valid for any integer x when |u| < 1 (shift j = x + j')."""
    if not abs(u) < 1:
        raise DivergentSumError("ratio outside the open unit interval")
    return window_coeffs(i, u)


@lru_cache(maxsize=None)
def faulhaber_coeffs(l: int) -> polys.PolyQ:
    """S with S(x) = sum_{j=1..x} j^l, exact for every integer endpoint pair
    via S(b) - S(a-1)."""
    coeffs = [Fraction(0)] * (l + 2)
    for k in range(l + 1):
        if k == 1:
            bk = Fraction(1, 2)  # the formula needs B_1 = +1/2, either way sympy leans
        else:
            b = sympy.bernoulli(k)
            bk = Fraction(int(b.p), int(b.q))
        coeffs[l + 1 - k] = Fraction(comb(l + 1, k)) * bk / (l + 1)
    return polys.normalize(tuple(coeffs))


def power_sum(i: int, J: int) -> Fraction:
    """sum_{j=0..J} j^i, J >= 0."""
    if J < 0:
        return Fraction(0)
    total = polys.evaluate(faulhaber_coeffs(i), Fraction(J))
    return total + 1 if i == 0 else total


def bounded_sum(i: int, u: Fraction, J: int) -> Fraction:
    """sum_{j=0..J} j^i u^j, exact for any rational u.

    For u != 1 the identity  S = N_i/(1-u)^(i+1) - u^(J+1)*T_i(J+1)  holds
    as rational functions, so it applies outside the unit interval too.
    """
    if J < 0:
        return Fraction(0)
    if u == 1:
        return power_sum(i, J)
    head = polys.evaluate(_numerators(i), u) / (1 - u) ** (i + 1)
    tail = polys.evaluate(window_coeffs(i, u), Fraction(J + 1))
    return head - u ** (J + 1) * tail


def _sum_from_zero(i: int, u: Fraction, J: int | float) -> Fraction:
    if J == INF:
        return full_sum(i, u)
    return bounded_sum(i, u, int(J))


def sum_progression(s: ProgressionSum) -> Fraction:
    """Exact value of the progression sum; DivergentSumError when the
    range is infinite and |t|^modulus >= 1."""
    k_min = int(s.k_min)
    k0 = k_min + (s.residue - k_min) % s.modulus
    if s.k_max != INF and k0 > s.k_max:
        return Fraction(0)
    J: int | float = INF if s.k_max == INF else (int(s.k_max) - k0) // s.modulus
    u = s.t**s.modulus
    if J == INF and not abs(u) < 1:
        raise DivergentSumError(
            f"sum over an unbounded range with ratio {s.t}^{s.modulus}"
        )
    n = Fraction(s.modulus)
    total = Fraction(0)
    for i in range(s.l + 1):
        coeff = Fraction(comb(s.l, i)) * Fraction(k0) ** (s.l - i) * n**i
        if coeff == 0:
            continue
        total += coeff * _sum_from_zero(i, u, J)
    return s.t**k0 * total
