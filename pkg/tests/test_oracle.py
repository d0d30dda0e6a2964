"""Enumeration oracle: frozen closed forms, boundary accounting, stabilization.

The hand values all come from geometric series over valuation shells: the
shell {v(t) = k} inside Z_p has measure (1 - 1/p) p^-k, so for instance
the integral of |t| over Z_3 is (2/3) * sum 9^-k = 3/4.
"""

from fractions import Fraction as F

import pytest

from padicells.cells import (
    Cell,
    CellCondition,
    coset_of,
    point_cell,
    punctured_ball_cell,
    zp_cell,
)
from padicells.expr import (
    Const,
    ConstructibleExpr,
    CTerm,
    NormFactor,
    ValFactor,
    Var,
    parse_constructible,
)
from padicells.oracle import (
    StabilizationError,
    UnboundedDomainError,
    oracle_integrate,
    oracle_measure,
    stabilize,
)
from padicells.padic import Prime

P2, P3, P5 = Prime(2), Prime(3), Prime(5)


def norm_t(power=1):
    return ConstructibleExpr.of([CTerm(F(1), (), (NormFactor(Var(0), F(power)),))])


def test_abs_t_on_z3():
    r = oracle_integrate(norm_t(), zp_cell(P3), P3, 6)
    assert abs(r.value - F(3, 4)) < F(1, 3**5)
    assert not r.sampled
    # only the zero class is undecided
    assert r.boundary_mass == F(1, 3**6)
    assert abs(r.value - F(3, 4)) <= r.boundary_mass  # sup |t| = 1


def test_abs_t_squared_on_z3():
    r = oracle_integrate(norm_t(2), zp_cell(P3), P3, 6)
    assert abs(r.value - F(9, 13)) < F(1, 3**5)


def test_constant_one_is_exact():
    for p in (P2, P3, P5):
        r = oracle_integrate(ConstructibleExpr.const(1), zp_cell(p), p, 3)
        assert r.value == 1
        assert r.boundary_mass == 0


def test_square_coset_measure():
    cell = Cell(
        (
            CellCondition(
                center=Const(F(0)),
                coset=coset_of(P3, 1, 2),
                upper=Const(F(1)),
                upper_strict=False,
            ),
        )
    )
    r = oracle_measure(cell, P3, 6)
    assert abs(r.value - F(3, 8)) < F(1, 3**4)


def test_open_ball_is_residue_determined():
    cell = punctured_ball_cell(P3, 0, 1)
    for N in (1, 2, 4):
        r = oracle_measure(cell, P3, N)
        assert r.value == F(1, 3)
        assert r.boundary_mass == 0


def test_point_cell_counts_as_boundary():
    r = oracle_measure(point_cell(P3, 2), P3, 4)
    assert r.value == 0
    assert r.boundary_mass == F(1, 3**4)


def test_unbounded_domain_rejected():
    cond = CellCondition(center=Const(F(0)), coset=coset_of(P3, 1, 1))
    with pytest.raises(UnboundedDomainError, match="unbounded domain"):
        oracle_measure(Cell((cond,)), P3, 3)


def test_prime_mismatch_rejected():
    with pytest.raises(ValueError):
        oracle_measure(zp_cell(P3), P5, 2)


def test_monotone_boundary_refinement():
    integrand = parse_constructible("v(x0 + 3)*abs(x0)")
    prev = None
    for N in (1, 2, 3, 4, 5):
        r = oracle_integrate(integrand, zp_cell(P3), P3, N)
        if prev is not None:
            assert r.boundary_mass <= prev
        prev = r.boundary_mass


def test_v_factor_zero_goes_to_boundary():
    # v(x0) is undefined on the class of 0; its mass must never be guessed
    integrand = ConstructibleExpr.of([CTerm(F(1), (ValFactor(Var(0), 1),), ())])
    r = oracle_integrate(integrand, zp_cell(P3), P3, 3)
    # sum over k=0..2 of k*(2/3)*3^-k
    assert r.value == F(2, 3) * (F(1, 3) + F(2, 9))
    assert r.boundary_mass == F(1, 27)


def test_two_stage_product_cell():
    # x0 in Z_3 (punctured), x1 in ball |x1 - x0| <= 1/3
    c0 = zp_cell(P3).conditions[0]
    c1 = CellCondition(
        center=Var(0),
        coset=coset_of(P3, 1, 1),
        upper=Const(F(3)),
        upper_strict=False,
    )
    cell = Cell((c0, c1))
    r = oracle_measure(cell, P3, 3)
    assert r.value == F(1, 3)
    assert r.boundary_mass == 0


def test_stabilize_reaches_tolerance():
    def op(N):
        return oracle_integrate(norm_t(), zp_cell(P3), P3, N)

    r = stabilize(op, 2, 10, F(1, 1000))
    assert r.resolution == 8  # 3^-8 is the first step below 1/1000
    assert abs(r.value - F(3, 4)) <= r.boundary_mass


def test_stabilize_immediate_when_determined():
    def op(N):
        return oracle_measure(punctured_ball_cell(P3, 0, 1), P3, N)

    r = stabilize(op, 2, 8, F(1, 100))
    assert r.resolution == 2
    assert r.value == F(1, 3)


def test_stabilize_gives_up():
    def op(N):
        return oracle_measure(point_cell(P3, 0), P3, N)

    with pytest.raises(StabilizationError, match="did not stabilize"):
        stabilize(op, 2, 4, F(1, 3**6))


def test_determinism():
    integrand = parse_constructible("abs(x0^2 - 1)")
    a = oracle_integrate(integrand, zp_cell(P5), P5, 3)
    b = oracle_integrate(integrand, zp_cell(P5), P5, 3)
    assert a == b


def test_sampled_fallback_is_labeled():
    r = oracle_integrate(norm_t(), zp_cell(P3), P3, 6, budget=100)
    assert r.sampled
    assert abs(r.value - F(3, 4)) < F(1, 4)  # estimate only, no sound bound


def test_exactness_on_residue_determined_integrand():
    # |x0| restricted to units is constant on classes mod 3: exact at N=1
    cell = Cell(
        (
            CellCondition(
                center=Const(F(0)),
                coset=coset_of(P3, 1, 1),
                lower=Const(F(3)),  # v < 1, i.e. |t| = 1
                upper=Const(F(1)),
                upper_strict=False,
            ),
        )
    )
    r = oracle_integrate(norm_t(), cell, P3, 1)
    assert r.value == F(2, 3)
    assert r.boundary_mass == 0


def test_bound_at_resolution_depth_is_boundary_not_outside():
    # lower bound v <= 4 at N = 4: the zero class mod 3^4 straddles the
    # window, so its mass must land in the bound, not be dropped
    cell = Cell(
        (
            CellCondition(
                center=Const(F(0)),
                coset=coset_of(P3, 1, 1),
                lower=Const(F(243)),
                lower_strict=True,
                upper=Const(F(1)),
                upper_strict=False,
            ),
        )
    )
    r = oracle_measure(cell, P3, 4)
    exact = sum(F(2, 3) * F(3) ** -k for k in range(5))
    assert r.boundary_mass == F(1, 81)
    assert abs(exact - r.value) <= r.boundary_mass


def test_ball_deeper_than_resolution_stays_boundary():
    # ball of radius 3^-6 seen at N = 4: nothing is certain yet
    deep = punctured_ball_cell(P3, F(0), 6)
    r = oracle_measure(deep, P3, 4)
    assert r.value == 0
    assert r.boundary_mass == F(1, 81)
    assert abs(F(3) ** -6 - r.value) <= r.boundary_mass
