"""Exact one-variable elimination and what it unlocks.

A prepared term delta * |(t-gamma)^a mu^-a|^(1/n) * v(t-gamma)^l lives on
one cell stage. Writing k = v(t-gamma), the stage confines k to a
progression k = v(mu) + n*j inside a window cut by the norm bounds, and
each level k carries measure eps * q^-k. The integral over the fiber is
therefore

    eps * delta * sum_k q^(-a(k - v(mu))/n) * k^l * q^-k
  = eps * delta * q^-v(mu) * sum_j (v(mu) + n j)^l * u^j,   u = q^-(a+n),

a progression sum with a rational ratio. Concrete mode evaluates it as a
number over a given base point. Symbolic mode rebuilds the same closed
form as a constructible function of the base: with the bound-valuation
residues pinned, the window ends j0, j1 become v(h)/n for bound terms h
rescaled into the coset grid, so u^j0 is a norm power of h and the
tail/Faulhaber polynomials in j0 become v-powers of h.

A term is integrable exactly when its window is cut on every side where
the geometric ratio does not already decay; this is read off (a, n, the
bound pattern, mu) alone, before any values. Elimination over a cell
list follows the all-or-nothing convention: one divergent cell zeroes
the entire level.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from . import polys, sums
from .cells import (
    Cell,
    CellCondition,
    coset_of,
    fiber_membership,
    fiber_valuation_range,
    level_set_measure,
)
from .decompose import PreparedTerm, decompose_univariate
from .expr import (
    Const,
    ConstructibleExpr,
    CTerm,
    DTerm,
    NormFactor,
    ValFactor,
    Var,
    as_poly_in,
    cexpr_term,
    d_add,
    d_mul,
    d_pow,
    d_scale,
    eval_constructible,
    eval_dterm,
    free_variables,
    print_dterm,
)
from .oracle import DEFAULT_BUDGET, oracle_measure
from .padic import INF, PAdicScalar, Prime, rational_valuation

NEG_INF = float("-inf")


class NotIntegrableError(ArithmeticError):
    """A term's valuation window is unbounded on a non-decaying side."""


class ResiduesNotFixedError(ValueError):
    """Symbolic elimination needs pinned bound-valuation residues."""


class UnsupportedIntegrandError(ValueError):
    """Integrand does not reduce to monomials in t - center on the cell."""


class PartitionError(RuntimeError):
    """Claimed cell partition fails the measure cross-check."""


# ---------------------------------------------------------------------------
# cell integrands

@dataclass(frozen=True)
class IntegrandTerm:
    delta: ConstructibleExpr
    a: int
    l: int

    def __post_init__(self) -> None:
        if self.l < 0:
            raise ValueError("l must be >= 0")


@dataclass(frozen=True)
class CellIntegrand:
    """Prepared terms to integrate against one cell's last stage."""

    cell: Cell
    terms: tuple[IntegrandTerm, ...]

    @staticmethod
    def of(cell: Cell, terms) -> "CellIntegrand":
        merged: dict[tuple[int, int], ConstructibleExpr] = {}
        for t in terms:
            if isinstance(t, PreparedTerm) and t.cell != cell:
                raise ValueError("prepared term belongs to a different cell")
            key = (t.a, t.l)
            merged[key] = merged.get(key, ConstructibleExpr.zero()) + t.delta
        out = tuple(
            IntegrandTerm(d, a, l) for (a, l), d in sorted(merged.items())
        )
        return CellIntegrand(cell, out)


def group_prepared(terms: list[PreparedTerm]) -> list[CellIntegrand]:
    """One CellIntegrand per distinct cell, first-seen order."""
    by_cell: dict[Cell, list[PreparedTerm]] = {}
    for t in terms:
        by_cell.setdefault(t.cell, []).append(t)
    return [CellIntegrand.of(c, ts) for c, ts in by_cell.items()]


def _decide_integrable(a: int, cond: CellCondition) -> None:
    # u = q^-(a+n); a capped window always converges, a one-sided window
    # only when the open side decays.
    n = cond.coset.n
    has_floor = cond.upper is not None
    has_ceil = cond.lower is not None
    if has_floor and has_ceil:
        return
    if has_floor and a + n >= 1:
        return
    if has_ceil and a + n <= -1:
        return
    raise NotIntegrableError(
        f"not integrable: exponent a={a} over an unbounded valuation window"
    )


# ---------------------------------------------------------------------------
# one stage, concrete base point

def integrate_cell(
    ci: CellIntegrand, base_point: list[PAdicScalar] | None = None
) -> Fraction | ConstructibleExpr:
    """Integrate the prepared terms over the cell's last stage.

    With base_point (scalars for the earlier stages) the result is an
    exact rational; without it, a constructible function of the base.
    Raises NotIntegrableError when some term diverges structurally.
    """
    cond = ci.cell.conditions[-1]
    prime = ci.cell.prime
    if base_point is not None:
        if len(base_point) != ci.cell.arity - 1:
            raise ValueError(
                f"base point has {len(base_point)} coordinates, "
                f"cell base has {ci.cell.arity - 1}"
            )
        return _integrate_concrete(ci, cond, list(base_point), prime)
    return _integrate_symbolic(ci, cond, prime)


def _integrate_concrete(
    ci: CellIntegrand,
    cond: CellCondition,
    base: list[PAdicScalar],
    prime: Prime,
) -> Fraction:
    if cond.coset.is_zero():
        return Fraction(0)
    for t in ci.terms:
        _decide_integrable(t.a, cond)
    rng = fiber_valuation_range(cond, base)
    n = cond.coset.n
    # the range helper ignores residue pins; a violated pin empties the fiber
    if cond.lower is not None and cond.lower_val_residue is not None:
        v = int(rng.k_max) + (1 if cond.lower_strict else 0)
        if v % n != cond.lower_val_residue:
            return Fraction(0)
    if cond.upper is not None and cond.upper_val_residue is not None:
        v = int(rng.k_min) - (1 if cond.upper_strict else 0)
        if v % n != cond.upper_val_residue:
            return Fraction(0)
    if rng.is_empty():
        return Fraction(0)
    vmu = int(cond.coset.mu.valuation)
    eps = level_set_measure(cond.coset).epsilon
    q = prime.p
    total = Fraction(0)
    for t in ci.terms:
        dval = eval_constructible(t.delta, base, prime)
        if dval == 0:
            continue
        u = Fraction(q) ** (-(t.a + n))
        total += dval * _window_value(t.l, u, rng, vmu, n)
    return eps * Fraction(q) ** (-vmu) * total


def _window_value(l: int, u: Fraction, rng, vmu: int, n: int) -> Fraction:
    """sum over attainable k of k^l u^((k - vmu)/n), binomially in j."""
    total = Fraction(0)
    if rng.k_min == NEG_INF:
        k_last = int(rng.k_max) - (int(rng.k_max) - vmu) % n
        j1 = (k_last - vmu) // n
        # j -> -j turns the downward sum into an upward one with ratio 1/u
        for i in range(l + 1):
            c = Fraction(comb(l, i)) * Fraction(vmu) ** (l - i) * Fraction(n) ** i
            if c == 0:
                continue
            s = sums.sum_progression(sums.ProgressionSum(i, 1 / u, 0, 1, -j1, INF))
            total += c * (s if i % 2 == 0 else -s)
        return total
    k0 = rng.first()
    assert k0 is not None
    j0 = (k0 - vmu) // n
    j1 = INF if rng.k_max == INF else j0 + rng.count() - 1
    for i in range(l + 1):
        c = Fraction(comb(l, i)) * Fraction(vmu) ** (l - i) * Fraction(n) ** i
        if c == 0:
            continue
        total += c * sums.sum_progression(sums.ProgressionSum(i, u, 0, 1, j0, j1))
    return total


# ---------------------------------------------------------------------------
# one stage, symbolic over the base

def _pinned_residue(cond: CellCondition, side: str) -> int:
    n = cond.coset.n
    bound = cond.lower if side == "lower" else cond.upper
    pin = cond.lower_val_residue if side == "lower" else cond.upper_val_residue
    if pin is not None:
        return pin
    if isinstance(bound, Const):
        v = rational_valuation(bound.value, cond.prime.p)
        if v == INF:
            raise ValueError(f"{side} bound is identically zero")
        return int(v) % n
    if n == 1:
        return 0
    raise ResiduesNotFixedError(
        f"residues not fixed: the {side} bound needs a pinned valuation "
        f"residue mod {n}"
    )


def _integrate_symbolic(
    ci: CellIntegrand, cond: CellCondition, prime: Prime
) -> ConstructibleExpr:
    if cond.coset.is_zero():
        return ConstructibleExpr.zero()
    for t in ci.terms:
        _decide_integrable(t.a, cond)
    n = cond.coset.n
    vmu = int(cond.coset.mu.valuation)
    mu = cond.coset.mu.value
    q = prime.p
    eps = level_set_measure(cond.coset).epsilon

    # h0, h1 are the bounds rescaled onto the coset grid: v(h0) = n*j0 and
    # v(h1) = n*j1 for the first and last attainable j over any base point
    # respecting the pins.
    h0 = h1 = None
    if cond.upper is not None:
        r = _pinned_residue(cond, "upper")
        c = 1 if cond.upper_strict else 0
        h0 = d_scale(cond.upper, Fraction(q) ** (c + (vmu - r - c) % n) / mu)
    if cond.lower is not None:
        r = _pinned_residue(cond, "lower")
        c = 1 if cond.lower_strict else 0
        h1 = d_scale(cond.lower, 1 / (Fraction(q) ** (c + (r - c - vmu) % n) * mu))

    out = ConstructibleExpr.zero()
    for t in ci.terms:
        u = Fraction(q) ** (-(t.a + n))
        pw = Fraction(t.a + n, n)
        acc = ConstructibleExpr.zero()
        for i in range(t.l + 1):
            coeff = Fraction(comb(t.l, i)) * Fraction(vmu) ** (t.l - i) * Fraction(n) ** i
            if coeff == 0:
                continue
            acc = acc + _window_expr(i, u, pw, h0, h1, n).scale(coeff)
        out = out + t.delta * acc
    return out.scale(eps * Fraction(q) ** (-vmu))


def _valuation_poly(h: DTerm, cs: polys.PolyQ, scale: Fraction) -> ConstructibleExpr:
    """The polynomial cs evaluated at scale * v(h)."""
    terms = []
    for e, c in enumerate(cs):
        if c == 0:
            continue
        terms.append(
            CTerm(c * scale**e, (ValFactor(h, e),) if e else (), ())
        )
    return ConstructibleExpr.of(terms)


def _norm_power(h: DTerm, power: Fraction) -> ConstructibleExpr:
    if power == 0:
        return ConstructibleExpr.const(1)
    return cexpr_term(1, (), (NormFactor(h, power),))


def _window_expr(
    i: int,
    u: Fraction,
    pw: Fraction,
    h0: DTerm | None,
    h1: DTerm | None,
    n: int,
) -> ConstructibleExpr:
    """sum_{j0 <= j <= j1} j^i u^j with j0 = v(h0)/n, j1 = v(h1)/n.

    |h|^pw realizes u^j because pw * v(h) = (a+n) * j; a missing end means
    the window runs to infinity on that side (the caller has already
    checked that the ratio decays there)."""
    if u == 1:
        # a = -n: every level weighs the same, only counting remains
        assert h0 is not None and h1 is not None
        fa = sums.faulhaber_coeffs(i)
        upper_part = _valuation_poly(h1, fa, Fraction(1, n))
        lower_part = _valuation_poly(
            h0, polys.taylor_shift(fa, Fraction(-1)), Fraction(1, n)
        )
        return upper_part + lower_part.scale(-1)
    if h0 is not None and h1 is not None:
        t = sums.window_coeffs(i, u)
        head = _norm_power(h0, pw) * _valuation_poly(h0, t, Fraction(1, n))
        tail = _norm_power(h1, pw) * _valuation_poly(
            h1, polys.taylor_shift(t, Fraction(1)), Fraction(1, n)
        )
        return head + tail.scale(-u)
    if h0 is not None:
        t = sums.window_coeffs(i, u)
        return _norm_power(h0, pw) * _valuation_poly(h0, t, Fraction(1, n))
    assert h1 is not None
    # reflect j -> -j: sum_{j <= j1} j^i u^j = (-1)^i sum_{m >= -j1} m^i (1/u)^m
    t = sums.window_coeffs(i, 1 / u)
    body = _norm_power(h1, pw) * _valuation_poly(h1, t, Fraction(-1, n))
    return body.scale(Fraction(-1) ** i)


# ---------------------------------------------------------------------------
# preparing an integrand against a cell

def _is_zero_term(t: DTerm) -> bool:
    return isinstance(t, Const) and t.value == 0


def _recenter(coeffs: list[DTerm], gamma: DTerm) -> list[DTerm]:
    """Coefficients of the same polynomial in (t - gamma)."""
    top = len(coeffs) - 1
    out = []
    for j in range(top + 1):
        s: DTerm = Const(Fraction(0))
        for i in range(j, top + 1):
            s = d_add(s, d_scale(d_mul(coeffs[i], d_pow(gamma, i - j)), comb(i, j)))
        out.append(s)
    return out


def _monomial_parts(h: DTerm, var: int, gamma: DTerm) -> tuple[DTerm | None, int]:
    """(c, d) with h = c * (t - gamma)^d, or (None, 0) when h is the zero
    polynomial in the variable; anything else is unsupported."""
    coeffs = as_poly_in(h, var)
    if coeffs is None:
        raise UnsupportedIntegrandError(
            f"factor {print_dterm(h)} is not polynomial in the integration variable"
        )
    shifted = _recenter(coeffs, gamma)
    nz = [(d, c) for d, c in enumerate(shifted) if not _is_zero_term(c)]
    if not nz:
        return None, 0
    if len(nz) > 1:
        raise UnsupportedIntegrandError(
            f"factor {print_dterm(h)} is not a monomial in t - center on this cell"
        )
    return nz[0][1], nz[0][0]


def _substitute_center(h: DTerm, var: int, gamma: DTerm) -> DTerm:
    if var not in free_variables(h):
        return h
    coeffs = as_poly_in(h, var)
    if coeffs is None:
        raise UnsupportedIntegrandError(
            f"factor {print_dterm(h)} is not polynomial in the integration variable"
        )
    out: DTerm = Const(Fraction(0))
    for c in reversed(coeffs):
        out = d_add(d_mul(out, gamma), c)
    return out


def prepare_integrand(f: ConstructibleExpr, cell: Cell) -> CellIntegrand:
    """Rewrite f on the cell as prepared terms in the last variable.

    Each factor touching the variable must become a monomial
    c * (t - center)^d once recentered. Norm powers then feed the
    exponent a (compensated by the coset scale), v-powers expand
    binomially into powers of v(t - center).
    """
    var = cell.arity - 1
    cond = cell.conditions[-1]
    gamma = cond.center
    n = cond.coset.n

    if cond.coset.is_zero():
        # the stage is a point: the variable is the center, substitute it
        fixed = []
        for term in f.terms:
            vfs = tuple(
                ValFactor(_substitute_center(v.h, var, gamma), v.power)
                for v in term.val_factors
            )
            nfs = tuple(
                NormFactor(_substitute_center(m.h, var, gamma), m.power)
                for m in term.norm_factors
            )
            fixed.append(IntegrandTerm(
                ConstructibleExpr.of([CTerm(term.coeff, vfs, nfs)]), 0, 0
            ))
        return CellIntegrand.of(cell, fixed)

    vmu = int(cond.coset.mu.valuation)
    q = cell.prime.p
    out: list[IntegrandTerm] = []
    for term in f.terms:
        by_l: dict[int, ConstructibleExpr] = {0: ConstructibleExpr.const(term.coeff)}
        kept_v: list[ValFactor] = []
        kept_n: list[NormFactor] = []
        a_total = 0
        extra = ConstructibleExpr.const(1)
        dead = False
        for vf in term.val_factors:
            if var not in free_variables(vf.h):
                kept_v.append(vf)
                continue
            c, d = _monomial_parts(vf.h, var, gamma)
            if c is None:
                raise UnsupportedIntegrandError(
                    "v-factor vanishes identically on the cell"
                )
            # (v(c) + d*K)^e with K = v(t - gamma)
            e = vf.power
            expansion = {
                m: cexpr_term(
                    Fraction(comb(e, m)) * Fraction(d) ** m,
                    (ValFactor(c, e - m),) if e - m else (),
                    (),
                )
                for m in range(e + 1)
            }
            by_l = _convolve(by_l, expansion)
        for nf in term.norm_factors:
            if var not in free_variables(nf.h):
                kept_n.append(nf)
                continue
            c, d = _monomial_parts(nf.h, var, gamma)
            if c is None:
                if nf.power > 0:
                    dead = True
                    break
                raise UnsupportedIntegrandError(
                    "norm of an identically-zero factor with a non-positive power"
                )
            a_inc = Fraction(n) * d * nf.power
            comp = Fraction(d) * nf.power * vmu
            if a_inc.denominator != 1 or comp.denominator != 1:
                raise UnsupportedIntegrandError(
                    f"norm power {nf.power} of degree {d} does not land on the "
                    f"coset grid mod {n}"
                )
            a_total += int(a_inc)
            # |c (t-gamma)^d|^e = |c|^e q^(-de vmu) * q^(-a(k - vmu)/n)
            extra = extra * cexpr_term(
                Fraction(q) ** (-int(comp)), (), (NormFactor(c, nf.power),)
            )
        if dead:
            continue
        base = extra * cexpr_term(1, tuple(kept_v), tuple(kept_n))
        for l, expr in by_l.items():
            out.append(IntegrandTerm(expr * base, a_total, l))
    return CellIntegrand.of(cell, out)


def _convolve(
    a: dict[int, ConstructibleExpr], b: dict[int, ConstructibleExpr]
) -> dict[int, ConstructibleExpr]:
    out: dict[int, ConstructibleExpr] = {}
    for i, x in a.items():
        for j, y in b.items():
            key = i + j
            out[key] = out.get(key, ConstructibleExpr.zero()) + x * y
    return out


def prepared_power(terms: list[PreparedTerm], s0: int) -> list[PreparedTerm]:
    """Prepared description of |f|^s0 from a norm-only description of f.

    On each cell |f| = |delta| * |(t-gamma)^a mu^-a|^(1/n), so raising to
    s0 scales a and replaces delta by q^(-s0 v(delta)). Requires l = 0
    and constant deltas, which is what decomposition emits.
    """
    if s0 < 1:
        raise ValueError("the power must be a positive integer")
    out = []
    for t in terms:
        if t.l != 0:
            raise ValueError("only norm-only prepared terms can be raised to a power")
        val = t.delta.constant_value()
        p = t.cell.prime.p
        if val == 0:
            delta = ConstructibleExpr.zero()
        else:
            v = rational_valuation(val, p)
            delta = ConstructibleExpr.const(Fraction(p) ** (-s0 * int(v)))
        out.append(PreparedTerm(delta, t.a * s0, 0, t.cell, t.center_floor))
    return out


# ---------------------------------------------------------------------------
# elimination over a cell list

@dataclass(frozen=True)
class EliminationResult:
    value: ConstructibleExpr
    integrable: bool


def eliminate_last_variable(
    integrands: list[CellIntegrand],
    base_point: list[PAdicScalar] | None = None,
) -> EliminationResult:
    """Sum of the stage integrals over the cells.

    All-or-nothing: one structurally divergent cell makes the whole level
    zero with integrable=False, no matter the cell order.
    """
    total_expr = ConstructibleExpr.zero()
    total_val = Fraction(0)
    for ci in integrands:
        try:
            piece = integrate_cell(ci, base_point)
        except NotIntegrableError:
            return EliminationResult(ConstructibleExpr.zero(), False)
        if base_point is None:
            assert isinstance(piece, ConstructibleExpr)
            total_expr = total_expr + piece
        else:
            assert isinstance(piece, Fraction)
            total_val += piece
    if base_point is None:
        return EliminationResult(total_expr, True)
    return EliminationResult(ConstructibleExpr.const(total_val), True)


def check_partition(
    cells: list[Cell],
    domain: Cell,
    N: int = 4,
    budget: int = DEFAULT_BUDGET,
) -> None:
    """Measure cross-check that the cells tile the domain.

    Compares the enumerated measure of the domain against the cell total;
    disagreement beyond the enumeration slack raises PartitionError."""
    if not cells:
        raise PartitionError("partition check failed: no cells")
    p = domain.prime
    dom = oracle_measure(domain, p, N, budget)
    total = Fraction(0)
    slack = dom.boundary_mass
    for c in cells:
        r = oracle_measure(c, p, N, budget)
        total += r.value
        slack += r.boundary_mass
    if abs(dom.value - total) > slack:
        raise PartitionError(
            f"partition check failed: cells measure {total}, domain measures "
            f"{dom.value}, slack {slack}"
        )


def _stage_guards(cond: CellCondition) -> tuple[tuple[DTerm, int, int], ...]:
    # explicit pins restrict the base; derived residues (n = 1, constant
    # bounds) are facts and need no guard
    n = cond.coset.n
    out = []
    if cond.lower is not None and cond.lower_val_residue is not None:
        out.append((cond.lower, n, cond.lower_val_residue))
    if cond.upper is not None and cond.upper_val_residue is not None:
        out.append((cond.upper, n, cond.upper_val_residue))
    return tuple(out)


def _guard_holds(
    guard: tuple[DTerm, int, int], point: list[PAdicScalar], prime: Prime
) -> bool:
    bound, n, r = guard
    value, err = eval_dterm(bound, point, prime)
    v = value.valuation
    if v == INF or v >= err:
        raise ValueError("pin guard bound is not separated from zero")
    return int(v) % n == r


def _resolve_guard(
    guard: tuple[DTerm, int, int], conds: tuple[CellCondition, ...]
) -> bool | None:
    """Decide a pin guard from the prefix structure alone, if possible.

    A guard v(x_i) = r mod n is settled by stage i when that stage pins
    v(x_i) itself: a zero-centered coset whose modulus n_i is a multiple
    of n, or a constant point."""
    bound, n, r = guard
    if not isinstance(bound, Var) or bound.index >= len(conds):
        return None
    cond = conds[bound.index]
    if cond.coset.is_zero():
        if isinstance(cond.center, Const) and cond.center.value != 0:
            v = rational_valuation(cond.center.value, cond.prime.p)
            return int(v) % n == r
        return None
    if not _is_zero_term(cond.center):
        return None
    if cond.coset.n % n == 0:
        return int(cond.coset.mu.valuation) % n == r
    return None


def integrate_full(
    f: ConstructibleExpr,
    cells: list[Cell],
    eliminate: int | None = None,
    base_point: tuple = (),
) -> EliminationResult:
    """Eliminate the trailing variables of every cell and evaluate.

    All cells must share one arity. Elimination runs symbolically stage
    by stage, merging results over common cell prefixes; the survivors
    are evaluated at base_point (rationals for the untouched leading
    variables). Cells with n >= 2 symbolic bounds must come in pinned
    already; each pin becomes a guard on the base, checked at the final
    evaluation, so pinned bounds may only involve surviving variables.
    """
    if not cells:
        return EliminationResult(ConstructibleExpr.zero(), True)
    arities = {c.arity for c in cells}
    if len(arities) != 1:
        raise ValueError("cells of mixed arity")
    arity = arities.pop()
    prime = cells[0].prime
    if eliminate is None:
        eliminate = arity - len(base_point)
    if not 0 <= eliminate <= arity or arity - eliminate != len(base_point):
        raise ValueError("base point does not match the variables kept")

    Guards = tuple[tuple[DTerm, int, int], ...]
    pairs: list[tuple[tuple[CellCondition, ...], Guards, ConstructibleExpr]] = [
        (c.conditions, (), f) for c in cells
    ]
    for _ in range(eliminate):
        grouped: dict[tuple, ConstructibleExpr] = {}
        for conds, guards, expr in pairs:
            ci = prepare_integrand(expr, Cell(conds))
            try:
                piece = integrate_cell(ci)
            except NotIntegrableError:
                return EliminationResult(ConstructibleExpr.zero(), False)
            assert isinstance(piece, ConstructibleExpr)
            prefix = conds[:-1]
            kept = []
            violated = False
            for g in guards + _stage_guards(conds[-1]):
                settled = _resolve_guard(g, prefix)
                if settled is None:
                    kept.append(g)
                elif settled is False:
                    violated = True
                    break
            if violated:
                continue
            key = (prefix, tuple(kept))
            grouped[key] = grouped.get(key, ConstructibleExpr.zero()) + piece
        pairs = [(conds, guards, e) for (conds, guards), e in grouped.items()]

    keep = len(base_point)
    for _, guards, _ in pairs:
        for bound, _, _ in guards:
            if any(i >= keep for i in free_variables(bound)):
                raise ValueError(
                    "pin guard references an eliminated variable; pin the "
                    "stages in elimination order instead"
                )
    point = [PAdicScalar(Fraction(x), prime) for x in base_point]
    total = Fraction(0)
    for conds, guards, expr in pairs:
        if conds and not fiber_membership(Cell(conds), point):
            continue
        if not all(_guard_holds(g, point, prime) for g in guards):
            continue
        total += eval_constructible(expr, point, prime)
    return EliminationResult(ConstructibleExpr.const(total), True)


# ---------------------------------------------------------------------------
# local zeta functions

@dataclass(frozen=True)
class ZetaRational:
    """numerator(T) / prod over (c, d) of (1 - q^-c T^d)."""

    numerator: polys.PolyQ
    denominator_factors: tuple[tuple[int, int], ...]
    prime: Prime

    def evaluate(self, T0) -> Fraction:
        T0 = Fraction(T0)
        den = Fraction(1)
        for c, d in self.denominator_factors:
            den *= 1 - Fraction(self.prime.p) ** (-c) * T0**d
        if den == 0:
            raise ZeroDivisionError(f"pole at T = {T0}")
        return polys.evaluate(self.numerator, T0) / den

    def series(self, order: int) -> list[Fraction]:
        """Power-series coefficients of Z(T) through T^order."""
        out = [Fraction(0)] * (order + 1)
        for i, c in enumerate(self.numerator[: order + 1]):
            out[i] = c
        q = self.prime.p
        for c, d in self.denominator_factors:
            expanded = [Fraction(0)] * (order + 1)
            for start in range(order + 1):
                if out[start] == 0:
                    continue
                m = 0
                while start + m * d <= order:
                    expanded[start + m * d] += out[start] * Fraction(q) ** (-c * m)
                    m += 1
            out = expanded
        return out

    def to_json(self) -> dict:
        return {
            "p": self.prime.p,
            "numerator": [str(c) for c in self.numerator],
            "denominator_factors": [
                {"c": c, "d": d} for c, d in self.denominator_factors
            ],
        }


def _denominator_poly(c: int, d: int, q: int) -> polys.PolyQ:
    out = [Fraction(0)] * (d + 1)
    out[0] = Fraction(1)
    out[d] = -Fraction(q) ** (-c)
    return tuple(out)


def igusa_zeta(f: polys.PolyQ, p: Prime, precision_N: int = 8) -> ZetaRational:
    """Z(T) = integral over Z_p of T^v(f(t)) dt, exactly.

    Decomposition writes |f| = |delta| q^-ak on each ball piece, so the
    piece contributes sum_{k >= j} T^(v(delta) + ak) * (1 - 1/q) q^-k, a
    geometric progression with ratio q^-1 T^a; point pieces are null.
    """
    terms = decompose_univariate(f, p, None, precision_N)
    pieces: list[tuple[Fraction, int, int]] = []
    q = p.p
    for t in terms:
        cond = t.cell.conditions[0]
        if cond.coset.is_zero():
            continue
        val = t.delta.constant_value()
        assert val != 0, "ball pieces carry a nonzero unit scale"
        dv = int(rational_valuation(val, q))
        assert isinstance(cond.upper, Const)
        j = int(rational_valuation(cond.upper.value, q))
        if cond.upper_strict:
            j += 1
        degree = dv if t.a == 0 else dv + t.a * j
        if degree < 0:
            raise ValueError(
                "zeta needs v(f) >= 0 on the domain; scale the polynomial first"
            )
        if t.a == 0:
            pieces.append((Fraction(1, q**j), degree, 0))
        else:
            pieces.append((Fraction(q - 1, q) * Fraction(1, q**j), degree, t.a))
    dens = tuple(sorted({(1, a) for _, _, a in pieces if a != 0}))
    num: polys.PolyQ = ()
    for coeff, degree, a in pieces:
        piece = polys.scale(
            tuple([Fraction(0)] * degree + [Fraction(1)]), coeff
        )
        for c, d in dens:
            if (c, d) == (1, a):
                continue
            piece = polys.mul(piece, _denominator_poly(c, d, q))
        num = polys.add(num, piece)
    return ZetaRational(num, dens, p)


def root_counts(f: polys.PolyQ, p: Prime, i_max: int) -> list[int]:
    """N_i = #{x mod p^i : f(x) = 0 mod p^i}, by enumeration; N_0 = 1."""
    for c in f:
        if Fraction(c).denominator != 1:
            raise ValueError("integer coefficients required for residue counting")
    cs = [int(c) for c in reversed(f)]
    out = [1]
    for i in range(1, i_max + 1):
        mod = p.p**i
        count = 0
        for x in range(mod):
            acc = 0
            for c in cs:
                acc = (acc * x + c) % mod
            if acc == 0:
                count += 1
        out.append(count)
    return out


@dataclass(frozen=True)
class PoincareReport:
    passed: bool
    counts: tuple[int, ...]
    expected: tuple[Fraction, ...]


def poincare_check(
    f: polys.PolyQ, p: Prime, i_max: int = 6, precision_N: int | None = None
) -> PoincareReport:
    """Consistency check between Z(T) and the root counts N_i.

    With M_i = meas{v(f) >= i} = N_i p^-i, the series P(T) = sum M_i T^i
    satisfies (1 - T) P = 1 - T Z, because Z = sum_k (M_k - M_{k+1}) T^k
    telescopes. So the partial sums of the series of 1 - T*Z must hit
    N_i p^-i, which this verifies by direct counting.
    """
    z = igusa_zeta(f, p, precision_N or max(8, i_max + 4))
    zs = z.series(i_max)
    counts = root_counts(f, p, i_max)
    expected = [Fraction(1)]
    for i in range(1, i_max + 1):
        expected.append(expected[-1] - zs[i - 1])
    passed = all(
        Fraction(counts[i], p.p**i) == expected[i] for i in range(i_max + 1)
    )
    return PoincareReport(passed, tuple(counts), tuple(expected))


# ---------------------------------------------------------------------------
# sums over counting variables

@dataclass(frozen=True)
class SimpleTerm:
    """coeff * prod z_i^powers[i] * q^(-sum q_coeffs[i] z_i) over the box
    lower[i] <= z_i <= upper[i] (None: unbounded below, INF: above)."""

    coeff: Fraction
    powers: tuple[int, ...]
    q_coeffs: tuple[int, ...]
    lower: tuple[int | None, ...]
    upper: tuple[int | float, ...]

    def __post_init__(self) -> None:
        k = len(self.powers)
        if not (len(self.q_coeffs) == len(self.lower) == len(self.upper) == k):
            raise ValueError("per-variable tuples of unequal length")
        if any(e < 0 for e in self.powers):
            raise ValueError("powers must be >= 0")


@dataclass(frozen=True)
class SimpleFunctionExpr:
    arity: int
    terms: tuple[SimpleTerm, ...]

    def __post_init__(self) -> None:
        for t in self.terms:
            if len(t.powers) != self.arity:
                raise ValueError("term arity mismatch")


def evaluate_simple(f: SimpleFunctionExpr, z: tuple[int, ...], q: int) -> Fraction:
    if len(z) != f.arity:
        raise ValueError("point arity mismatch")
    total = Fraction(0)
    for t in f.terms:
        inside = all(
            (t.lower[i] is None or z[i] >= t.lower[i])
            and (t.upper[i] == INF or z[i] <= t.upper[i])
            for i in range(f.arity)
        )
        if not inside:
            continue
        acc = t.coeff
        for i in range(f.arity):
            acc *= Fraction(z[i]) ** t.powers[i]
            acc *= Fraction(q) ** (-t.q_coeffs[i] * z[i])
        total += acc
    return total


def simple_to_constructible(f: SimpleFunctionExpr) -> ConstructibleExpr:
    """Reads z_i as v(x_i): z^e becomes a v-power, q^-cz a norm power.

    Only range-free terms have a constructible image; eliminate the
    ranges first."""
    out = []
    for t in f.terms:
        if any(lo is not None for lo in t.lower) or any(up != INF for up in t.upper):
            raise ValueError("range constraints have no constructible image")
        vfs = tuple(
            ValFactor(Var(i), e) for i, e in enumerate(t.powers) if e
        )
        nfs = tuple(
            NormFactor(Var(i), Fraction(c)) for i, c in enumerate(t.q_coeffs) if c
        )
        out.append(CTerm(t.coeff, vfs, nfs))
    return ConstructibleExpr.of(out)


def constructible_to_simple(g: ConstructibleExpr, arity: int) -> SimpleFunctionExpr:
    """Inverse reading for expressions whose factors are bare variables."""
    terms = []
    for t in g.terms:
        powers = [0] * arity
        q_coeffs = [0] * arity
        for vf in t.val_factors:
            if not isinstance(vf.h, Var) or vf.h.index >= arity:
                raise ValueError("v-factor argument is not a counting variable")
            powers[vf.h.index] += vf.power
        for nf in t.norm_factors:
            if not isinstance(nf.h, Var) or nf.h.index >= arity:
                raise ValueError("norm argument is not a counting variable")
            if nf.power.denominator != 1:
                raise ValueError("fractional norm power has no counting reading")
            q_coeffs[nf.h.index] += int(nf.power)
        terms.append(SimpleTerm(
            t.coeff,
            tuple(powers),
            tuple(q_coeffs),
            (None,) * arity,
            (INF,) * arity,
        ))
    return SimpleFunctionExpr(arity, tuple(terms))


def sum_eliminate_simple(f: SimpleFunctionExpr, p: Prime) -> SimpleFunctionExpr:
    """Sum out the last counting variable exactly.

    sum_z z^e q^(-cz) over lo <= z <= hi is the integral of
    v(t)^e |t|^(c-1) * q/(q-1) over {lo <= v(t) <= hi}: each level v = z
    carries measure (1 - 1/q) q^-z and the density cancels it back to 1.
    Divergent tails raise, as does a range with no lower end.
    """
    if f.arity == 0:
        raise ValueError("no variable left to sum")
    last = f.arity - 1
    q = p.p
    merged: dict[tuple, Fraction] = {}
    for t in f.terms:
        lo, hi = t.lower[last], t.upper[last]
        if lo is None:
            raise ValueError(f"unsupported range: z_{last} has no lower end")
        if hi != INF and hi < lo:
            continue
        e, c = t.powers[last], t.q_coeffs[last]
        cond = CellCondition(
            center=Const(Fraction(0)),
            coset=coset_of(p, 1, 1),
            lower=Const(Fraction(q) ** int(hi)) if hi != INF else None,
            lower_strict=False,
            upper=Const(Fraction(q) ** lo),
            upper_strict=False,
        )
        cell = Cell((cond,))
        integrand = cexpr_term(
            Fraction(q, q - 1),
            (ValFactor(Var(0), e),) if e else (),
            (NormFactor(Var(0), Fraction(c - 1)),) if c != 1 else (),
        )
        try:
            value = integrate_cell(prepare_integrand(integrand, cell), [])
        except NotIntegrableError as exc:
            raise sums.DivergentSumError(f"divergent sum over z_{last}") from exc
        assert isinstance(value, Fraction)
        if value == 0:
            continue
        key = (t.powers[:last], t.q_coeffs[:last], t.lower[:last], t.upper[:last])
        merged[key] = merged.get(key, Fraction(0)) + t.coeff * value
    terms = tuple(
        SimpleTerm(v, *k) for k, v in merged.items() if v != 0
    )
    return SimpleFunctionExpr(f.arity - 1, terms)
