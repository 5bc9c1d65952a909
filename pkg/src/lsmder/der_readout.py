"""Dendritically enhanced readout: two opponent cells with nonlinear branches.

Each cell has ``m`` branches of ``k`` binary (weight 1) synapses. A branch
sums the states of the afferents wired to its slots and passes the sum
through the saturating square ``min(v**2 / x_thr, x_sat)``; the cell output
is the sum over branches. The readout squashes ``f_plus - f_minus``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SQUASHES = ("signum01", "sigmoid_half", "identity")


@dataclass
class DendriticCell:
    wiring: np.ndarray  # (m, k) afferent indices
    d: int

    def __post_init__(self):
        self.wiring = np.asarray(self.wiring, dtype=np.intp)
        if self.wiring.ndim != 2:
            raise ValueError("wiring must be an (m, k) matrix")
        if self.wiring.size and (self.wiring.min() < 0 or self.wiring.max() >= self.d):
            raise ValueError(f"wiring entries must lie in [0, {self.d})")

    @property
    def m(self) -> int:
        return self.wiring.shape[0]

    @property
    def k(self) -> int:
        return self.wiring.shape[1]

    @classmethod
    def random(cls, m: int, k: int, d: int, rng: np.random.Generator) -> "DendriticCell":
        return cls(rng.integers(0, d, size=(m, k)), d)

    def copy(self) -> "DendriticCell":
        return DendriticCell(self.wiring.copy(), self.d)


@dataclass(frozen=True)
class NonlinearityParams:
    x_thr: float = 1.8
    x_sat: float = 75.0

    def __post_init__(self):
        if not self.x_thr > 0:
            raise ValueError("x_thr must be positive")
        if not self.x_sat > 0:
            raise ValueError("x_sat must be positive (use math.inf for no saturation)")


@dataclass
class ReadoutPair:
    positive: DendriticCell
    negative: DendriticCell
    nl: NonlinearityParams
    squash: str = "signum01"

    def __post_init__(self):
        if self.squash not in SQUASHES:
            raise ValueError(f"unknown squash {self.squash!r}")
        p, n = self.positive, self.negative
        if (p.m, p.k, p.d) != (n.m, n.k, n.d):
            raise ValueError("both cells must share m, k and d")

    @classmethod
    def random(cls, m, k, d, nl, squash, rng) -> "ReadoutPair":
        return cls(DendriticCell.random(m, k, d, rng), DendriticCell.random(m, k, d, rng), nl, squash)

    @property
    def cells(self) -> tuple[DendriticCell, DendriticCell]:
        return self.positive, self.negative

    def copy(self) -> "ReadoutPair":
        return ReadoutPair(self.positive.copy(), self.negative.copy(), self.nl, self.squash)


def branch_drive(cell: DendriticCell, j: int, x) -> float:
    """Sum of ``x`` over the afferents of branch ``j`` (repeats count twice)."""
    return float(np.sum(np.asarray(x)[cell.wiring[j]]))


def branch_drives(cell: DendriticCell, X) -> np.ndarray:
    """Drives of all branches; ``X`` may be one state or ``(N, d)``, result ``(..., m)``."""
    return np.asarray(X)[..., cell.wiring].sum(axis=-1)


def branch_nl(v, nl: NonlinearityParams):
    """Saturating square ``min(v**2 / x_thr, x_sat)``."""
    sq = np.square(v) / nl.x_thr
    if math.isinf(nl.x_sat):
        return sq
    return np.minimum(sq, nl.x_sat)


def cell_output(cell: DendriticCell, x, nl: NonlinearityParams):
    return branch_nl(branch_drives(cell, x), nl).sum(axis=-1)


def squash(z, kind: str):
    z = np.asarray(z, dtype=np.float64)
    if kind == "signum01":
        return np.where(z >= 0, 1.0, 0.0)
    if kind == "sigmoid_half":
        return 0.5 * (1.0 + np.tanh(z / 4.0))
    if kind == "identity":
        return z
    raise ValueError(f"unknown squash {kind!r}")


def sigmoid_half(z):
    """``1 / (1 + exp(-z/2))`` evaluated without overflow."""
    return squash(z, "sigmoid_half")


def pair_output(pair: ReadoutPair, x):
    """Squashed opponent difference; ties go to the '+' class for ``signum01``."""
    z = cell_output(pair.positive, x, pair.nl) - cell_output(pair.negative, x, pair.nl)
    return squash(z, pair.squash)


def classify_pattern(per_sample_outputs: Sequence[float]) -> int:
    """Majority vote over a pattern's per-sample {0,1} outputs; ties -> 1."""
    outs = np.asarray(per_sample_outputs)
    if outs.size == 0:
        raise ValueError("need at least one sample output")
    ones = int(np.count_nonzero(outs >= 0.5))
    return 1 if 2 * ones >= outs.size else 0


def mean_active_current(states) -> float:
    """Mean of the nonzero state entries."""
    states = np.asarray(getattr(states, "samples", states))
    active = states[states > 0]
    if active.size == 0:
        raise ZeroDivisionError("no active synaptic current in the states")
    return float(active.mean())


def choose_x_thr(states, fraction: float = 1.5) -> float:
    """Branch threshold inside ``(I_syn, 2*I_syn)``, ``I_syn`` the mean active state.

    ``fraction`` picks the point in the bracket; 1.5 is the midpoint.
    """
    if not 1.0 < fraction < 2.0:
        raise ValueError("fraction must lie strictly between 1 and 2")
    return fraction * mean_active_current(states)
