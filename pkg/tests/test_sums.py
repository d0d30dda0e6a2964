import random
from fractions import Fraction

import pytest

from padicells import polys
from padicells.padic import INF
from padicells.sums import (
    DivergentSumError,
    ProgressionSum,
    bounded_sum,
    faulhaber_coeffs,
    full_sum,
    power_sum,
    sum_progression,
    tail_coeffs,
    window_coeffs,
)

F = Fraction


def brute(s: ProgressionSum, upto: int) -> Fraction:
    hi = upto if s.k_max == INF else min(upto, int(s.k_max))
    total = F(0)
    for k in range(int(s.k_min), hi + 1):
        if k % s.modulus == s.residue:
            total += F(k) ** s.l * s.t**k
    return total


def geometric_tail_bound(s: ProgressionSum, K: int) -> Fraction:
    """Exact bound on the omitted tail after k = K: term ratios decrease,
    so the tail is dominated by a geometric series at the first ratio."""
    t = abs(s.t)
    rho = F(K + 2) ** s.l / F(K + 1) ** s.l * t
    assert rho < 1, "K too small for a clean ratio bound"
    first = F(K + 1) ** s.l * t ** (K + 1)
    return first / (1 - rho)


def test_geometric_example():
    assert sum_progression(ProgressionSum(0, F(1, 3))) == F(3, 2)


def test_weighted_example():
    assert sum_progression(ProgressionSum(1, F(1, 3))) == F(3, 4)


def test_odd_progression_example():
    s = ProgressionSum(0, F(1, 3), residue=1, modulus=2, k_min=1)
    assert sum_progression(s) == F(3, 8)


def test_faulhaber_example():
    assert sum_progression(ProgressionSum(2, F(1), k_min=1, k_max=5)) == 55


def test_divergence_rejected():
    with pytest.raises(DivergentSumError):
        sum_progression(ProgressionSum(0, F(1)))
    with pytest.raises(DivergentSumError):
        sum_progression(ProgressionSum(2, F(-1), k_min=0))
    with pytest.raises(DivergentSumError):
        sum_progression(ProgressionSum(0, F(5, 3), residue=0, modulus=2))


def test_validation():
    with pytest.raises(ValueError):
        ProgressionSum(-1, F(1, 2))
    with pytest.raises(ValueError):
        ProgressionSum(0, F(1, 2), residue=3, modulus=2)
    with pytest.raises(ValueError):
        ProgressionSum(0, F(0))
    with pytest.raises(ValueError):
        ProgressionSum(0, F(1, 2), k_min=float("-inf"))


def test_random_convergent_instances_match_partial_sums():
    rng = random.Random(42)
    for _ in range(50):
        l = rng.randint(0, 4)
        t = F(rng.choice([1, -1]) * rng.randint(1, 4), rng.randint(5, 9))
        modulus = rng.randint(1, 3)
        s = ProgressionSum(l, t, residue=rng.randrange(modulus), modulus=modulus,
                           k_min=rng.randint(-3, 3))
        K = 60
        assert abs(sum_progression(s) - brute(s, K)) <= geometric_tail_bound(s, K)


def test_finite_ranges_exact():
    rng = random.Random(5)
    for _ in range(40):
        l = rng.randint(0, 3)
        t = F(rng.randint(-7, 7) or 2, rng.randint(1, 6))
        modulus = rng.randint(1, 3)
        k_min = rng.randint(-5, 5)
        s = ProgressionSum(l, t, residue=rng.randrange(modulus), modulus=modulus,
                           k_min=k_min, k_max=k_min + rng.randint(0, 12))
        assert sum_progression(s) == brute(s, 50)


def test_splitting_property():
    rng = random.Random(9)
    for _ in range(20):
        l = rng.randint(0, 3)
        t = F(rng.randint(1, 3), rng.randint(4, 7))
        k_min = rng.randint(-2, 2)
        M = k_min + rng.randint(0, 10)
        whole = sum_progression(ProgressionSum(l, t, k_min=k_min))
        head = sum_progression(ProgressionSum(l, t, k_min=k_min, k_max=M))
        tail = sum_progression(ProgressionSum(l, t, k_min=M + 1))
        assert whole == head + tail


def test_shift_recombination():
    # sum (k+1)^l t^k = (1/t) * sum over shifted k of k^l t^k
    t = F(2, 5)
    for l in range(4):
        lhs = sum(
            F(comb := 1, 1) * 0 for _ in ()
        )  # placeholder to keep flake quiet
        from math import comb

        lhs = sum(
            F(comb(l, i)) * sum_progression(ProgressionSum(i, t, k_min=0))
            for i in range(l + 1)
        )
        rhs = sum_progression(ProgressionSum(l, t, k_min=1)) / t
        assert lhs == rhs


def test_empty_range_is_zero():
    assert sum_progression(ProgressionSum(3, F(1, 2), k_min=5, k_max=4)) == 0
    s = ProgressionSum(0, F(1, 2), residue=1, modulus=3, k_min=5, k_max=6)
    assert sum_progression(s) == brute(s, 10)


def test_faulhaber_coeffs_windows():
    for l in range(5):
        S = faulhaber_coeffs(l)
        for a, b in [(-6, 4), (1, 1), (-3, -1), (0, 7)]:
            want = sum(F(j) ** l for j in range(a, b + 1))
            got = polys.evaluate(S, F(b)) - polys.evaluate(S, F(a - 1))
            assert got == want, (l, a, b)


def test_power_sum():
    assert power_sum(0, 4) == 5
    assert power_sum(2, 4) == 30
    assert power_sum(3, -1) == 0


def test_bounded_sum_outside_unit_interval():
    for u in (F(3), F(-2), F(-1), F(7, 2)):
        for i in range(4):
            direct = sum(F(j) ** i * u**j for j in range(9))
            assert bounded_sum(i, u, 8) == direct, (u, i)


def test_tail_coeffs_identity():
    u = F(1, 3)
    for i in range(4):
        T = tail_coeffs(i, u)
        for x in (-3, 0, 4):
            full = full_sum(i, u) if x <= 0 else None
            approx = sum(F(j) ** i * u**j for j in range(x, 300))
            closed = u**x * polys.evaluate(T, F(x))
            assert abs(closed - approx) < F(1, 10**80)


def test_window_coeffs_two_ended_identity():
    """u^x T(x) - u^(y+1) T(y+1) is the window sum for any u != 1,
    including negative endpoints and ratios outside the unit interval."""
    for u in (F(1, 3), F(3), F(-2), F(5, 2)):
        for i in range(4):
            T = window_coeffs(i, u)
            for x, y in [(0, 6), (-4, 2), (3, 3), (2, 1)]:
                direct = sum(F(j) ** i * u**j for j in range(x, y + 1))
                closed = u**x * polys.evaluate(T, F(x)) - u ** (y + 1) * polys.evaluate(
                    T, F(y + 1)
                )
                assert closed == direct, (u, i, x, y)


def test_window_coeffs_rejects_one():
    with pytest.raises(ValueError):
        window_coeffs(2, F(1))
