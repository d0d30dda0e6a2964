"""Ground truth by enumeration over residue classes mod p^N.

Every class r + p^N Z_p either lies inside the domain cell, outside it,
or straddles a boundary. Class-level decisions are made soundly: each
subterm is evaluated at the canonical lift (the least nonnegative
representative) together with a lower bound on the valuation of its
variation across the class, and anything the class does not pin down is
counted as boundary mass instead of being guessed. Decisions about
punctures and graphs are almost-everywhere decisions, which is the right
notion for integrals: a single excluded point never carries measure.

An exact result at resolution N satisfies
|true - value| <= boundary_mass * sup|integrand on the domain|.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .cells import Cell, CellCondition, fiber_membership
from .expr import (
    Add,
    Const,
    ConstructibleExpr,
    DTerm,
    EvaluationPrecisionError,
    Inv,
    Mul,
    Neg,
    Poly,
    RestrictedSeries,
    Var,
    VFactorZeroError,
    eval_constructible,
)
from .padic import (
    INF,
    PAdicScalar,
    Prime,
    hensel_power_depth,
    in_coset,
    rational_valuation,
)

NEG_INF = float("-inf")
DEFAULT_BUDGET = 10**7

INSIDE, OUTSIDE, BOUNDARY = 1, 0, -1


class UnboundedDomainError(ValueError):
    """The cell escapes Z_p^n, so residue enumeration cannot cover it."""


class StabilizationError(ArithmeticError):
    """Boundary mass did not drop below tolerance by the final resolution."""


@dataclass(frozen=True)
class OracleResult:
    value: Fraction
    resolution: int
    boundary_mass: Fraction
    sampled: bool = False


# ---------------------------------------------------------------------------
# class-level evaluation: value at the canonical lift + variation bound

def _class_eval(t: DTerm, reps: tuple[Fraction, ...], N: int, p: int):
    """Returns (value at lift, dv): across the class, the term moves by
    something of valuation >= dv."""
    if isinstance(t, Const):
        return t.value, INF
    if isinstance(t, Var):
        return reps[t.index], N
    if isinstance(t, Add):
        a, da = _class_eval(t.left, reps, N, p)
        b, db = _class_eval(t.right, reps, N, p)
        return a + b, min(da, db)
    if isinstance(t, Neg):
        a, da = _class_eval(t.arg, reps, N, p)
        return -a, da
    if isinstance(t, Mul):
        a, da = _class_eval(t.left, reps, N, p)
        b, db = _class_eval(t.right, reps, N, p)
        va, vb = rational_valuation(a, p), rational_valuation(b, p)
        return a * b, min(min(va, da) + db, da + min(vb, db))
    if isinstance(t, Inv):
        a, da = _class_eval(t.arg, reps, N, p)
        if da == INF:
            return (Fraction(0) if a == 0 else 1 / a), INF
        va = rational_valuation(a, p)
        if va < da:
            return 1 / a, da - 2 * va
        return Fraction(0), NEG_INF  # possibly huge: nothing certified
    if isinstance(t, Poly):
        x, dx = _class_eval(t.argument, reps, N, p)
        acc, dacc = Fraction(0), INF
        vx = rational_valuation(x, p)
        for c in reversed(t.coeffs):
            va = rational_valuation(acc, p)
            dacc = min(min(va, dacc) + dx, dacc + min(vx, dx))
            acc = acc * x + c
        return acc, dacc
    if isinstance(t, RestrictedSeries):
        return _class_eval_series(t, reps, N, p)
    raise TypeError(f"not a DTerm: {t!r}")


def _class_eval_series(t: RestrictedSeries, reps, N, p):
    args = [_class_eval(a, reps, N, p) for a in t.arguments]
    inside = True
    for a, da in args:
        va = rational_valuation(a, p)
        if va < 0 and va < da:
            return Fraction(0), INF  # the whole class sits outside the polydisc
        if not (min(va, da) >= 0):
            inside = False
    if not inside:
        return Fraction(0), NEG_INF  # straddles the polydisc boundary
    from .expr import _series_exponents

    exps = _series_exponents(len(t.arguments), len(t.coeffs))
    total = Fraction(0)
    for c, alpha in zip(t.coeffs, exps):
        if c == 0:
            continue
        mono = c
        for (a, _), e in zip(args, alpha):
            mono *= a**e
        total += mono
    dv: float | int = t.tail_valuation
    inexact = [da for _, da in args if da != INF]
    if inexact:
        cmin = min(
            [t.tail_valuation]
            + [rational_valuation(c, p) for c in t.coeffs if c != 0]
        )
        dv = min(dv, min(inexact) + cmin)
    return total, dv


def _determined_valuation(value: Fraction, dv, p: int):
    """Exact v across the class, or None when the class does not pin it."""
    v = rational_valuation(value, p)
    if v < dv:
        return int(v)
    return None


# ---------------------------------------------------------------------------
# class-level membership, one stage at a time

def _stage_decision(
    cond: CellCondition, reps: tuple[Fraction, ...], t_rep: Fraction, N: int
) -> int:
    p = cond.prime.p
    from .expr import d_sub

    diff = d_sub(Const(t_rep), cond.center)
    value, dv = _class_eval(diff, reps, N, p)
    # t_rep stands for a whole class: t itself moves by p^N Z, so the
    # difference is never certified beyond depth N
    dv = min(dv, N)
    v_exact = _determined_valuation(value, dv, p)
    k_low = min(rational_valuation(value, p), dv)

    if cond.coset.is_zero():
        # a graph stage never contains a whole class; it can only be
        # certainly missed
        return OUTSIDE if v_exact is not None else BOUNDARY

    n = cond.coset.n
    verdict = INSIDE

    if n == 1:
        pass  # membership in mu*P_1 holds off the null puncture
    elif v_exact is None:
        verdict = BOUNDARY
    else:
        if dv - v_exact < hensel_power_depth(n, p):
            verdict = BOUNDARY
        else:
            member = in_coset(
                PAdicScalar(value, cond.prime), cond.coset
            )
            if not member:
                return OUTSIDE

    for bound, strict, pin, is_lower in (
        (cond.lower, cond.lower_strict, cond.lower_val_residue, True),
        (cond.upper, cond.upper_strict, cond.upper_val_residue, False),
    ):
        if bound is None:
            continue
        bval, bdv = _class_eval(bound, reps, N, p)
        bv = _determined_valuation(bval, bdv, p)
        if bv is None:
            verdict = BOUNDARY
            continue
        if pin is not None and bv % n != pin:
            return OUTSIDE
        if is_lower:
            k_max = bv - 1 if strict else bv
            if k_low > k_max:
                return OUTSIDE
            if v_exact is None:
                verdict = BOUNDARY  # k only bounded below; may exceed k_max
        else:
            k_min = bv + 1 if strict else bv
            if k_low >= k_min:
                continue
            if v_exact is not None:
                return OUTSIDE  # k is pinned below k_min across the class
            verdict = BOUNDARY
    return verdict


def _class_factor_value(
    f: ConstructibleExpr, reps: tuple[Fraction, ...], N: int, prime: Prime
):
    """Exact value of the integrand on the class, or None if undetermined."""
    p = prime.p
    total = Fraction(0)
    for term in f.terms:
        acc = term.coeff
        for vf in term.val_factors:
            value, dv = _class_eval(vf.h, reps, N, p)
            v = _determined_valuation(value, dv, p)
            if v is None:
                return None  # includes exact zeros: v(0) has no value
            acc *= Fraction(v) ** vf.power
        for nf in term.norm_factors:
            value, dv = _class_eval(nf.h, reps, N, p)
            if value == 0 and dv == INF:
                if nf.power < 0:
                    return None
                acc = Fraction(0)
                continue
            v = _determined_valuation(value, dv, p)
            if v is None:
                return None
            e = nf.power * v
            if e.denominator != 1:
                return None
            acc *= Fraction(p) ** (-int(e))
        total += acc
    return total


def _check_enumerable(domain: Cell) -> None:
    for i, cond in enumerate(domain.conditions):
        if cond.coset.is_zero() or cond.upper is not None:
            continue
        raise UnboundedDomainError(
            f"unbounded domain: stage {i} has no upper norm bound"
        )


# ---------------------------------------------------------------------------
# drivers

def oracle_integrate(
    integrand: ConstructibleExpr,
    domain: Cell,
    p: Prime,
    N: int,
    budget: int = DEFAULT_BUDGET,
) -> OracleResult:
    """Enumerate classes mod p^N over Z_p^arity.

    Classes certainly inside with a class-determined integrand contribute
    exactly; everything undecided accumulates into boundary_mass. Above
    the class budget a deterministic point-sampling estimate is returned
    instead, labeled sampled=True.
    """
    if p != domain.prime:
        raise ValueError("prime does not match the domain's")
    if N < 1:
        raise ValueError("resolution must be >= 1")
    _check_enumerable(domain)
    arity = domain.arity
    if p.p ** (arity * N) > budget:
        return _sampled_estimate(integrand, domain, N)

    pN = p.p**N
    class_measure = Fraction(1, pN) ** arity
    value = Fraction(0)
    boundary = Fraction(0)

    def rec(reps: tuple[Fraction, ...], stage: int):
        nonlocal value, boundary
        if stage == arity:
            got = _class_factor_value(integrand, reps, N, p)
            if got is None:
                boundary += class_measure
            else:
                value += got * class_measure
            return
        cond = domain.conditions[stage]
        depth_measure = Fraction(1, pN) ** (stage + 1)
        for r in range(pN):
            decision = _stage_decision(cond, reps, Fraction(r), N)
            if decision == OUTSIDE:
                continue
            if decision == BOUNDARY:
                boundary += depth_measure
                continue
            rec(reps + (Fraction(r),), stage + 1)

    rec((), 0)
    return OracleResult(value, N, boundary)


def oracle_measure(
    domain: Cell, p: Prime, N: int, budget: int = DEFAULT_BUDGET
) -> OracleResult:
    return oracle_integrate(ConstructibleExpr.const(1), domain, p, N, budget)


def stabilize(
    op: Callable[[int], OracleResult],
    N_start: int,
    N_max: int,
    tolerance: Fraction,
) -> OracleResult:
    """Rerun op at N, N+2, ... until boundary mass drops below tolerance."""
    if not N_start < N_max:
        raise ValueError("need N_start < N_max")
    result = None
    for N in range(N_start, N_max + 1, 2):
        result = op(N)
        if result.boundary_mass < tolerance:
            return result
    assert result is not None
    raise StabilizationError(
        f"did not stabilize: boundary mass {result.boundary_mass} at N={result.resolution}"
    )


# ---------------------------------------------------------------------------
# over-budget fallback: deterministic point samples stratified by valuation

def _sampled_estimate(
    integrand: ConstructibleExpr, domain: Cell, N: int
) -> OracleResult:
    p = domain.prime.p
    arity = domain.arity
    shells = list(range(N)) + [N]  # per-coordinate valuation, N = "deeper"

    def shell_measure(s: int) -> Fraction:
        if s == N:
            return Fraction(1, p) ** N
        return Fraction(p - 1, p) * Fraction(1, p) ** s

    def shell_points(s: int) -> list[Fraction]:
        units = [u for u in (1, 1 + p, 2) if u % p != 0]
        seen: list[Fraction] = []
        for u in units:
            x = Fraction(u * p**s) if s < N else Fraction(p**N)
            if x not in seen:
                seen.append(x)
        return seen

    value = Fraction(0)
    boundary = Fraction(0)

    def rec(coords: tuple[Fraction, ...], measure: Fraction):
        nonlocal value, boundary
        if len(coords) == arity:
            point = [PAdicScalar(c, domain.prime) for c in coords]
            try:
                if not fiber_membership(domain, point):
                    return
                value += measure * eval_constructible(integrand, point, domain.prime)
            except (VFactorZeroError, EvaluationPrecisionError, ZeroDivisionError):
                boundary += measure
            return
        for s in shells:
            pts = shell_points(s)
            for x in pts:
                rec(coords + (x,), measure * shell_measure(s) / len(pts))

    rec((), Fraction(1))
    return OracleResult(value, N, boundary, sampled=True)
