"""Exact p-adic arithmetic on rationals: valuations, norms, power cosets.

Every quantity is a `fractions.Fraction`; nothing in this module rounds.
Approximation lives elsewhere (restricted-series evaluation and the
enumeration oracle), and is always reported with an explicit bound.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction

from sympy import isprime

# Valuation of zero. Absorbing under addition, greater than every integer.
INF = float("inf")


class CosetDepthError(ValueError):
    """The working modulus is too shallow to decide n-th power membership."""


def as_fraction(x: int | str | Fraction) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


def int_valuation(n: int, p: int) -> int:
    """Multiplicity of p in a nonzero integer."""
    if n == 0:
        raise ValueError("valuation of 0 is infinite; handle separately")
    n = abs(n)
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def rational_valuation(x: Fraction, p: int) -> int | float:
    """p-adic valuation of a rational, INF for zero."""
    if x == 0:
        return INF
    return int_valuation(x.numerator, p) - int_valuation(x.denominator, p)


@dataclass(frozen=True)
class Prime:
    """A checked prime p. The residue field has q = p elements."""

    p: int

    def __post_init__(self) -> None:
        if self.p < 2 or not isprime(self.p):
            raise ValueError(f"not a prime: {self.p}")

    @property
    def q(self) -> int:
        return self.p


@dataclass(frozen=True)
class PAdicScalar:
    """An exact rational viewed inside Q_p.

    Arithmetic is plain rational arithmetic; the prime tag only controls
    how valuations and norms are read off.
    """

    value: Fraction
    prime: Prime

    def _check(self, other: "PAdicScalar") -> None:
        if self.prime != other.prime:
            raise ValueError("mixed primes in scalar arithmetic")

    def __add__(self, other: "PAdicScalar") -> "PAdicScalar":
        self._check(other)
        return PAdicScalar(self.value + other.value, self.prime)

    def __sub__(self, other: "PAdicScalar") -> "PAdicScalar":
        self._check(other)
        return PAdicScalar(self.value - other.value, self.prime)

    def __mul__(self, other: "PAdicScalar") -> "PAdicScalar":
        self._check(other)
        return PAdicScalar(self.value * other.value, self.prime)

    def __truediv__(self, other: "PAdicScalar") -> "PAdicScalar":
        self._check(other)
        if other.value == 0:
            raise ZeroDivisionError("division by the zero scalar")
        return PAdicScalar(self.value / other.value, self.prime)

    def __neg__(self) -> "PAdicScalar":
        return PAdicScalar(-self.value, self.prime)

    def is_zero(self) -> bool:
        return self.value == 0

    @property
    def valuation(self) -> int | float:
        return rational_valuation(self.value, self.prime.p)

    @property
    def norm(self) -> Fraction:
        """|x| = p^(-v(x)), with |0| = 0."""
        if self.value == 0:
            return Fraction(0)
        return Fraction(1, self.prime.p) ** self.valuation

    def unit_part(self) -> "PAdicScalar":
        """x * p^(-v(x)); errors on zero."""
        if self.value == 0:
            raise ValueError("the zero scalar has no unit part")
        v = self.valuation
        return PAdicScalar(self.value * Fraction(self.prime.p) ** (-v), self.prime)


def scalar(x: int | str | Fraction, prime: Prime) -> PAdicScalar:
    return PAdicScalar(as_fraction(x), prime)


@dataclass(frozen=True)
class Coset:
    """The multiplicative coset mu * (Q_p^x)^n, or the singleton {0} when mu = 0.

    mu is a constant scalar, n >= 1 the power. Membership of nonzero x
    requires v(x) = v(mu) mod n together with the unit parts differing by
    an n-th power unit.
    """

    mu: PAdicScalar
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("coset power must be >= 1")

    @property
    def prime(self) -> Prime:
        return self.mu.prime

    def is_zero(self) -> bool:
        return self.mu.is_zero()


def hensel_power_depth(n: int, p: int) -> int:
    """Modulus exponent D with: a unit u is an n-th power iff some unit w
    has w^n = u mod p^D. D = 2*v_p(n) + 1 suffices (Newton condition
    v(w^n - u) > 2*v(n*w^(n-1)) holds for any witness mod p^D)."""
    return 2 * int_valuation(n, p) + 1


@functools.lru_cache(maxsize=None)
def nth_power_unit_residues(p: int, n: int, modulus_exp: int) -> frozenset[int]:
    """Residues mod p^modulus_exp hit by u -> u^n on units."""
    m = p**modulus_exp
    return frozenset(pow(w, n, m) for w in range(1, m) if w % p != 0)


@functools.lru_cache(maxsize=None)
def _nth_power_witnesses(p: int, n: int, modulus_exp: int) -> dict[int, int]:
    """One n-th root witness per hit residue class."""
    m = p**modulus_exp
    out: dict[int, int] = {}
    for w in range(1, m):
        if w % p != 0:
            out.setdefault(pow(w, n, m), w)
    return out


def _unit_residue(x: Fraction, p: int, modulus_exp: int) -> int:
    """x mod p^modulus_exp for a rational unit x (v_p(x) = 0)."""
    m = p**modulus_exp
    num = x.numerator % m
    den = x.denominator % m
    return (num * pow(den, -1, m)) % m


def _self_check_witness(u: Fraction, p: int, n: int, depth: int, witness: int) -> None:
    # Lift the witness two digits deeper; failure would mean the depth bound
    # is wrong, so abort loudly rather than return a silent wrong answer.
    e = int_valuation(n, p)
    m2 = p ** (depth + 2)
    target = _unit_residue(u, p, depth + 2)
    step = p ** (depth - e)
    base = witness % step
    for i in range(p ** (e + 2)):
        w2 = base + i * step
        if w2 % p != 0 and pow(w2, n, m2) == target:
            return
    raise RuntimeError(
        f"power-coset self-check failed lifting witness {witness} for p={p}, n={n}"
    )


def in_coset(x: PAdicScalar, coset: Coset, depth: int | None = None) -> bool:
    """Exact membership of x in the coset.

    depth is the working modulus exponent for the unit n-th power test; it
    defaults to the Hensel-sufficient bound 2*v_p(n) + 1 and may be raised
    but not lowered. Positive answers are re-checked by lifting a root
    witness two digits deeper.
    """
    if coset.is_zero():
        return x.is_zero()
    if x.is_zero():
        return False
    x._check(coset.mu)
    p = coset.prime.p
    n = coset.n
    ratio = x.value / coset.mu.value
    v = rational_valuation(ratio, p)
    if v % n != 0:
        return False
    least = hensel_power_depth(n, p)
    if depth is None:
        depth = least
    elif depth < least:
        raise CosetDepthError(
            f"depth {depth} below the Hensel-sufficient bound {least} for p={p}, n={n}"
        )
    unit = ratio * Fraction(p) ** (-v)
    residue = _unit_residue(unit, p, depth)
    if residue not in nth_power_unit_residues(p, n, depth):
        return False
    _self_check_witness(unit, p, n, depth, _nth_power_witnesses(p, n, depth)[residue])
    return True


def coset_representatives(p: int, n: int) -> list[Fraction]:
    """Representatives of Q_p^x modulo n-th powers, deterministic order.

    The returned set {p^j * u} has one u per unit class; the cosets they
    generate partition Q_p^x.
    """
    depth = hensel_power_depth(n, p)
    m = p**depth
    image = nth_power_unit_residues(p, n, depth)
    unit_reps: list[int] = []
    covered: set[int] = set()
    for u in range(1, m):
        if u % p == 0 or u in covered:
            continue
        unit_reps.append(u)
        covered.update((u * s) % m for s in image)
    return [Fraction(p) ** j * u for j in range(n) for u in unit_reps]
