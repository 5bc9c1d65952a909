"""Pattern-memorisation capacity of a dendritic cell by counting wirings.

A branch with ``k`` binary synapses drawn from ``d`` lines can be wired in
``C(k+d-1, k)`` distinct ways (a multiset of afferents); a cell is a
multiset of ``m`` such branches. The capacity is the log2 of the count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CellShape:
    m: int
    k: int
    d: int

    def __post_init__(self):
        if min(self.m, self.k, self.d) < 1:
            raise ValueError("m, k and d must all be >= 1")


def log2_int(n: int) -> float:
    """log2 of a positive (arbitrarily large) integer to double precision."""
    if n <= 0:
        raise ValueError("log2 needs a positive integer")
    shift = max(n.bit_length() - 64, 0)
    return math.log2(n >> shift) + shift


def wiring_count(shape: CellShape) -> int:
    branch_wirings = math.comb(shape.k + shape.d - 1, shape.k)
    return math.comb(branch_wirings + shape.m - 1, shape.m)


def bn_capacity(shape: CellShape) -> float:
    """Capacity in bits of one cell."""
    return log2_int(wiring_count(shape))


@dataclass(frozen=True)
class SweepRow:
    m: int
    k: int
    bits: float

    @property
    def pair_bits(self) -> float:
        """Capacity of the two opponent cells together."""
        return 2 * self.bits


def capacity_sweep(s: int, d: int) -> list[SweepRow]:
    """Capacity for every factorisation ``m * k = s``, ordered by ``m``."""
    if s < 1:
        raise ValueError("s must be >= 1")
    rows = []
    for m in range(1, s + 1):
        if s % m == 0:
            rows.append(SweepRow(m, s // m, bn_capacity(CellShape(m, s // m, d))))
    return rows


def best_branch_count(s: int, d: int) -> int:
    return max(capacity_sweep(s, d), key=lambda r: r.bits).m
