"""Univariate cell decomposition of |f| over balls in Z_p.

The strategy is a ball tree. Factor f over Q once; locate the Z_p-roots
of each irreducible factor (exact for linear factors, certified Hensel
lifts otherwise); then refine balls until each one either contains no
root and |f| is provably constant on it, or contains exactly one root
gamma and |f(t)| = |delta| * |t - gamma|^multiplicity holds on it. Both
facts are read off the Taylor coefficients of f at the ball center: on
|u| <= p^-j the term d_i u^i wins the ultrametric race iff
v(d_i) + i*k is the strict minimum for every attainable k = v(u).

Every finished ball is emitted as a punctured cell plus the 0-cell at
its center, so the output partitions the ball exactly, points included.

Centers of non-rational roots are approximations certified to a stated
depth. Below valuation center_floor the description is not certified;
the lift depth is chosen so that floor lies beyond working precision,
where no residue class can determine either side of the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import sympy

from . import polys
from .cells import (
    Cell,
    CellCondition,
    cell_to_json,
    coset_of,
    fiber_membership,
    point_cell,
)
from .expr import Const, ConstructibleExpr
from .padic import (
    INF,
    PAdicScalar,
    Prime,
    int_valuation,
    rational_valuation,
)


class HenselConditionError(ValueError):
    """Seed does not dominate its derivative strongly enough to lift."""


class PrecisionExhausted(ArithmeticError):
    """Subdivision hit the precision cap without certifying constancy."""


@dataclass(frozen=True)
class HenselRoot:
    approx: Fraction
    multiplicity: int
    precision: int
    certified: bool


@dataclass(frozen=True)
class PreparedTerm:
    """One summand delta * |(t-gamma)^a mu^-a|^(1/n) * v(t-gamma)^l on a cell.

    center_floor, when set, is the valuation depth down to which the
    description is certified; the center is only a class representative
    of a non-rational root below it.
    """

    delta: ConstructibleExpr
    a: int
    l: int
    cell: Cell
    center_floor: int | None = None

    def __post_init__(self) -> None:
        if self.l < 0:
            raise ValueError("l must be >= 0")


# ---------------------------------------------------------------------------
# Hensel lifting

def hensel_lift(f: polys.PolyQ, p: Prime, seed, target_N: int) -> HenselRoot:
    """Newton-lift a seed residue to a root class mod p^target_N.

    Requires v(f(seed)) > 2*v(f'(seed)); then the sequence converges to
    the unique root in the seed's dominance ball and the returned approx
    satisfies v(f(approx)) >= target_N with the root congruent to approx
    mod p^target_N.
    """
    if target_N < 1:
        raise ValueError("target_N must be >= 1")
    x = Fraction(seed)
    df = polys.derivative(f)
    fx = polys.evaluate(f, x)
    e = rational_valuation(polys.evaluate(df, x), p.p)
    w = rational_valuation(fx, p.p)
    if not w > 2 * e:
        raise HenselConditionError(
            f"Hensel condition fails: v(f(seed)) = {w} is not > 2*v(f'(seed)) = {2 * e}"
        )
    # invariant: v(f(x)) = w keeps doubling relative to e, v(f'(x)) stays e
    while w != INF and w - e < target_N:
        x = x - polys.evaluate(f, x) / polys.evaluate(df, x)
        w = rational_valuation(polys.evaluate(f, x), p.p)
    if w == INF or rational_valuation(x, p.p) < 0:
        return HenselRoot(x, 1, target_N, True)
    assert isinstance(e, int)
    modulus = p.p ** (target_N + max(e, 0))
    num, den = x.numerator, x.denominator
    approx = Fraction(num * pow(den, -1, modulus) % modulus)
    return HenselRoot(approx, 1, target_N, True)


def _zp_root_seeds(g: polys.PolyQ, p: Prime, depth_cap: int) -> list[Fraction]:
    """Seeds in Z_p from which g Hensel-lifts, one per root, by breadth-first
    refinement of the residue classes on which g can vanish."""
    dg = polys.derivative(g)
    seeds: list[Fraction] = []
    level = [(Fraction(r), 1) for r in range(p.p)]
    while level:
        nxt = []
        for r, k in level:
            w = rational_valuation(polys.evaluate(g, r), p.p)
            if w < k:
                continue
            e = rational_valuation(polys.evaluate(dg, r), p.p)
            if w > 2 * e:
                seeds.append(r)
                continue
            if k >= depth_cap:
                raise PrecisionExhausted(
                    "precision exhausted: root isolation stalled at depth "
                    f"{k} for a degree-{polys.degree(g)} factor"
                )
            nxt.extend((r + i * p.p**k, k + 1) for i in range(p.p))
        level = nxt
    return seeds


@dataclass(frozen=True)
class _TrackedRoot:
    root: HenselRoot
    exact: bool
    factor: polys.PolyQ  # squarefree factor the root came from
    multiplicity: int

    def deepen(self, p: Prime, target_N: int) -> "_TrackedRoot":
        if self.exact or self.root.precision >= target_N:
            return self
        lifted = hensel_lift(self.factor, p, self.root.approx, target_N)
        return replace(self, root=replace(lifted, multiplicity=self.multiplicity))


def _factor_over_q(f: polys.PolyQ):
    t = sympy.Symbol("t")
    expr = sympy.Add(
        *(sympy.Rational(c.numerator, c.denominator) * t**i for i, c in enumerate(f))
    )
    _, factors = sympy.factor_list(expr, t)
    out = []
    for g_expr, exp in factors:
        poly = sympy.Poly(g_expr, t)
        coeffs = [Fraction(int(c.p), int(c.q)) for c in reversed(poly.all_coeffs())]
        out.append((polys.poly_from(coeffs), int(exp)))
    out.sort(key=lambda fe: (polys.degree(fe[0]), fe[0]))
    return out


def _zp_roots(f: polys.PolyQ, p: Prime, lift_N: int) -> list[_TrackedRoot]:
    roots: list[_TrackedRoot] = []
    for g, m in _factor_over_q(f):
        if polys.degree(g) < 1:
            continue
        if polys.degree(g) == 1:
            r = -g[0] / g[1]
            if rational_valuation(r, p.p) < 0:
                continue
            roots.append(
                _TrackedRoot(HenselRoot(r, m, lift_N, True), True, g, m)
            )
            continue
        for seed in _zp_root_seeds(g, p, lift_N):
            lifted = hensel_lift(g, p, seed, lift_N)
            if any(
                not rt.exact
                and rt.factor == g
                and rational_valuation(rt.root.approx - lifted.approx, p.p)
                >= min(rt.root.precision, lift_N)
                for rt in roots
            ):
                continue
            roots.append(
                _TrackedRoot(replace(lifted, multiplicity=m), False, g, m)
            )
    roots.sort(key=lambda rt: rt.root.approx)
    return roots


# ---------------------------------------------------------------------------
# ball tree

def _ball_hull(domain: Cell | None, p: Prime) -> tuple[Fraction, int]:
    """(center, j) of the closed ball the domain fills, puncture aside."""
    if domain is None:
        return Fraction(0), 0
    if domain.arity != 1:
        raise ValueError("decomposition domain must be a 1-variable cell")
    cond = domain.conditions[0]
    if not isinstance(cond.center, Const):
        raise ValueError("domain center must be constant")
    if cond.coset.is_zero() or cond.coset.n != 1:
        raise ValueError("domain must be a punctured ball with a trivial coset")
    if cond.lower is not None or cond.lower_val_residue is not None:
        raise ValueError("domain must be a full ball, not an annulus")
    if cond.upper is None or not isinstance(cond.upper, Const):
        raise ValueError("domain must carry a constant radius bound")
    j = rational_valuation(cond.upper.value, p.p)
    if cond.upper_strict:
        j += 1
    c = cond.center.value
    if j < 0 or rational_valuation(c, p.p) < 0:
        raise ValueError("domain escapes Z_p")
    assert isinstance(j, int)
    return c, j


def _punctured(p: Prime, center: Fraction, j: int) -> Cell:
    cond = CellCondition(
        center=Const(center),
        coset=coset_of(p, 1, 1),
        upper=Const(Fraction(p.p) ** j),
        upper_strict=False,
    )
    return Cell((cond,))


def _emit_pair(
    out: list[PreparedTerm],
    p: Prime,
    center: Fraction,
    j: int,
    a: int,
    delta_ball: Fraction,
    delta_point: Fraction,
    floor: int | None,
) -> None:
    out.append(
        PreparedTerm(
            ConstructibleExpr.const(delta_ball), a, 0, _punctured(p, center, j), floor
        )
    )
    out.append(
        PreparedTerm(
            ConstructibleExpr.const(delta_point), 0, 0, point_cell(p, Const(center)), floor
        )
    )


def _constant_norm_on_ball(d: polys.PolyQ, j: int, p: int) -> bool:
    """|sum d_i u^i| = |d_0| for every v(u) >= j."""
    if not d or d[0] == 0:
        return False
    v0 = rational_valuation(d[0], p)
    return all(
        v0 < rational_valuation(d[i], p) + i * j for i in range(1, len(d)) if d[i]
    )


def _dominant_root_floor(d: polys.PolyQ, m: int, j: int, p: int):
    """Largest K with |f(gamma+u)| = |d_m||u|^m for all j <= v(u) <= K,
    or None when the m-th Taylor term never dominates down the ball."""
    vm = rational_valuation(d[m], p)
    for i in range(m + 1, len(d)):
        if d[i] and not vm < rational_valuation(d[i], p) + (i - m) * j:
            return None
    floor: int | float = INF
    for i in range(m):
        if not d[i]:
            continue
        gap = rational_valuation(d[i], p) - vm
        if gap <= (m - i) * j:
            return None
        # (m-i)*k < gap, i.e. k <= ceil(gap/(m-i)) - 1
        floor = min(floor, -(-gap // (m - i)) - 1)
    return floor


def decompose_univariate(
    f: polys.PolyQ,
    p: Prime,
    domain: Cell | None = None,
    precision_N: int = 8,
) -> list[PreparedTerm]:
    """Partition a ball into cells on which |f| has a prepared description.

    Deterministic: balls split into their p children in residue order and
    pieces are emitted in depth-first order.
    """
    if polys.is_zero(f):
        raise ValueError("f must not be identically zero")
    if precision_N < 1:
        raise ValueError("precision must be >= 1")
    hull_center, hull_j = _ball_hull(domain, p)
    lift_N = max(2 * precision_N, precision_N + 16)
    roots = [
        rt
        for rt in _zp_roots(f, p, lift_N)
        if rational_valuation(rt.root.approx - hull_center, p.p) >= hull_j
    ]
    out: list[PreparedTerm] = []

    def handle(center: Fraction, j: int) -> None:
        nonlocal roots
        if j > precision_N:
            raise PrecisionExhausted(
                f"precision exhausted: subdivision passed depth {precision_N}"
            )
        local = [
            k
            for k, rt in enumerate(roots)
            if rational_valuation(rt.root.approx - center, p.p) >= j
        ]
        if len(local) == 1:
            rt = roots[local[0]]
            m = rt.multiplicity
            while True:
                gamma = rt.root.approx
                d = polys.taylor_shift(f, gamma)
                floor = _dominant_root_floor(d, m, j, p.p)
                if floor is None:
                    break
                if rt.exact or floor >= precision_N + 2:
                    _emit_pair(
                        out,
                        p,
                        gamma,
                        j,
                        m,
                        d[m],
                        polys.evaluate(f, gamma),
                        None if floor == INF else int(floor),
                    )
                    return
                deeper = rt.deepen(p, 2 * rt.root.precision)
                roots[local[0]] = rt = deeper
        elif not local:
            d = polys.taylor_shift(f, center)
            if _constant_norm_on_ball(d, j, p.p):
                _emit_pair(out, p, center, j, 0, d[0], d[0], None)
                return
        for i in range(p.p):
            handle(center + i * Fraction(p.p) ** j, j + 1)

    handle(hull_center, hull_j)
    return out


# ---------------------------------------------------------------------------
# exhaustive verification

@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    classes_checked: int
    equality_checks: int
    counterexamples: tuple[str, ...]


def _prepared_valuation(term: PreparedTerm, k: int):
    """v of the prepared description at v(t-gamma) = k; None if not integral."""
    cond = term.cell.conditions[-1]
    delta = _constant_value(term.delta)
    if delta == 0:
        return INF
    vd = rational_valuation(delta, cond.prime.p)
    if term.a == 0:
        return Fraction(vd)
    vmu = cond.coset.mu.valuation
    e = Fraction(term.a * (k - vmu), cond.coset.n)
    if e.denominator != 1:
        return None
    return vd + e


def _constant_value(delta: ConstructibleExpr) -> Fraction:
    total = Fraction(0)
    for term in delta.terms:
        if term.val_factors or term.norm_factors:
            raise ValueError("prepared delta must be constant over an empty base")
        total += term.coeff
    return total


def verify_prepared(
    terms: list[PreparedTerm],
    f: polys.PolyQ,
    p: Prime,
    N: int,
    domain: Cell | None = None,
) -> VerifyReport:
    """Check every residue lift mod p^N: disjointness, coverage of the
    domain's ball hull, and |f| = prepared value wherever the class
    determines both sides. Point cells are checked exactly at their
    single member. Coverage is judged against the hull because the
    punctures in 1-cells are null points supplied by companion 0-cells.
    """
    fi, fscale = polys.integerize(f)
    vscale = rational_valuation(fscale, p.p)
    var_min = min((rational_valuation(c, p.p) for c in f[1:] if c), default=0)
    hull = _ball_hull(domain, p) if domain is not None else None
    counterexamples: list[str] = []
    checks = 0
    pN = p.p**N

    def note(msg: str) -> None:
        if len(counterexamples) < 5:
            counterexamples.append(msg)

    for r in range(pN):
        point = [PAdicScalar(Fraction(r), p)]
        members = [
            i for i, term in enumerate(terms) if fiber_membership(term.cell, point)
        ]
        in_hull = hull is None or rational_valuation(
            Fraction(r) - hull[0], p.p
        ) >= hull[1]
        if len(members) > 1:
            note(f"lift {r} lies in {len(members)} cells")
            continue
        if not members:
            if in_hull and terms:
                note(f"lift {r} is in the domain but in no cell")
            continue
        if not in_hull:
            note(f"lift {r} is outside the domain but in a cell")
            continue
        term = terms[members[0]]
        cond = term.cell.conditions[-1]
        gamma = _center_value(cond)
        vf = (
            int_valuation(polys.evaluate_int(fi, r), p.p) + vscale
            if polys.evaluate_int(fi, r)
            else INF
        )
        if cond.coset.is_zero():
            # the lift IS the center: compare exactly at the point
            checks += 1
            delta = _constant_value(term.delta)
            vd = INF if delta == 0 else rational_valuation(delta, p.p)
            if vf != vd:
                note(f"point cell at {gamma}: v(f) = {vf}, prepared {vd}")
            continue
        k = rational_valuation(Fraction(r) - gamma, p.p)
        if k >= N or not vf < N + var_min:
            continue  # class does not determine both sides
        want = _prepared_valuation(term, k)
        checks += 1
        if want is None:
            note(f"lift {r}: prepared exponent not integral at k = {k}")
        elif vf != want:
            note(f"lift {r}: v(f) = {vf}, prepared description gives {want}")
    return VerifyReport(not counterexamples, pN, checks, tuple(counterexamples))


def _center_value(cond: CellCondition) -> Fraction:
    if not isinstance(cond.center, Const):
        raise ValueError("verification needs constant centers")
    return cond.center.value


# ---------------------------------------------------------------------------
# serialization

def _rat(x: Fraction) -> str:
    return str(Fraction(x))


def prepared_to_json(terms: list[PreparedTerm]) -> dict:
    cells = []
    rows = []
    for term in terms:
        cond = term.cell.conditions[-1]
        if not isinstance(cond.center, Const):
            raise ValueError("only constant centers serialize to the terms table")
        cells.append(cell_to_json(term.cell))
        rows.append(
            {
                "delta": _rat(_constant_value(term.delta)),
                "a": term.a,
                "l": term.l,
                "gamma": _rat(cond.center.value),
                "mu": _rat(cond.coset.mu.value),
                "n": cond.coset.n,
            }
        )
    return {"cells": cells, "terms": rows}
