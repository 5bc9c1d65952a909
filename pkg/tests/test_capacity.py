import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsmder.capacity import CellShape, best_branch_count, bn_capacity, capacity_sweep, log2_int, wiring_count


def enumerate_wirings(m, k, d):
    branches = list(itertools.combinations_with_replacement(range(d), k))
    return sum(1 for _ in itertools.combinations_with_replacement(branches, m))


class TestCapacity:
    @pytest.mark.parametrize("m,k,d,bits", [(1, 1, 1, 0.0), (1, 1, 4, 2.0), (2, 2, 3, math.log2(21))])
    def test_small_cases(self, m, k, d, bits):
        assert bn_capacity(CellShape(m, k, d)) == pytest.approx(bits, abs=1e-12)

    @pytest.mark.parametrize("m,k,d", [(1, 2, 4), (2, 2, 3), (3, 2, 3), (2, 3, 4)])
    def test_counts_match_enumeration(self, m, k, d):
        assert wiring_count(CellShape(m, k, d)) == enumerate_wirings(m, k, d)

    def test_invalid_shape(self):
        with pytest.raises(ValueError):
            CellShape(0, 1, 1)

    def test_large_dimension(self):
        bits = bn_capacity(CellShape(7, 10, 10_000))
        assert math.isfinite(bits) and bits > 0

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 60))
    def test_increasing_in_d(self, m, k, d):
        assert bn_capacity(CellShape(m, k, d + 1)) > bn_capacity(CellShape(m, k, d))

    @given(st.integers(1, 10**400))
    def test_log2_int(self, n):
        # exact check against Fraction: 2**floor <= n < 2**(floor+1)
        got = log2_int(n)
        lo = n.bit_length() - 1
        assert lo <= got < lo + 1 + 1e-12
        if n < 2**50:
            assert got == pytest.approx(math.log2(n), rel=1e-15)
        assert Fraction(n) >= 2 ** Fraction(lo)

    def test_log2_int_rejects_zero(self):
        with pytest.raises(ValueError):
            log2_int(0)


class TestSweep:
    def test_best_split(self):
        rows = capacity_sweep(70, 140)
        assert [r.m for r in rows] == [1, 2, 5, 7, 10, 14, 35, 70]
        assert best_branch_count(70, 140) == 14

    @pytest.mark.parametrize("p", [2, 13, 71])
    def test_prime(self, p):
        assert [r.m for r in capacity_sweep(p, 10)] == [1, p]

    def test_self_consistent(self):
        for row in capacity_sweep(60, 50):
            assert row.m * row.k == 60
            assert row.bits == bn_capacity(CellShape(row.m, row.k, 50))
            assert row.pair_bits == 2 * row.bits

    def test_invalid(self):
        with pytest.raises(ValueError):
            capacity_sweep(0, 5)
