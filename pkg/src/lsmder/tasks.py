"""Benchmark datasets: jittered spike-template classification and windowed sum of rates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spike_core import RateSignal, SpikeTrain, jitter_train, modulated_poisson, poisson_train


@dataclass(frozen=True)
class TaskOneParams:
    q: int = 2
    e: int = 1
    rate: float = 20.0
    jitter: float = 0.004
    t_max: float = 0.5

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("need at least two classes")


@dataclass(frozen=True)
class TaskTwoParams:
    e: int = 4
    window: float = 0.030
    delay: float = 0.0
    phase: float = 0.0
    duration: float = 1.0
    a_ranges: tuple = ((0.0, 30.0), (70.0, 100.0))
    b_ranges: tuple = ((0.0, 30.0), (70.0, 100.0))
    f_ranges: tuple = ((0.5, 1.0), (3.0, 5.0))
    test_a: float = 50.0
    test_b: float = 50.0
    test_f: float = 2.0
    normalizer: float = 200.0


@dataclass
class Dataset:
    """Input patterns of one split, with per-pattern labels or rate signals."""

    split: str
    inputs: list[list[SpikeTrain]]
    labels: np.ndarray | None = None
    signals: list[RateSignal] = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)


def generate_task1(params: TaskOneParams, p_patterns: int, rng: np.random.Generator):
    """Templates plus equally sized, class-balanced train and test jitter sets.

    Returns ``(templates, train, test)``; labels cycle through ``0..q-1``.
    """
    if p_patterns < params.q:
        raise ValueError("need at least one pattern per class")
    templates = [[poisson_train(params.rate, params.t_max, rng) for _ in range(params.e)]
                 for _ in range(params.q)]
    labels = np.arange(p_patterns) % params.q
    splits = []
    for split in ("train", "test"):
        inputs = [[jitter_train(tr, params.jitter, rng) for tr in templates[c]] for c in labels]
        splits.append(Dataset(split, inputs, labels.copy()))
    return templates, splits[0], splits[1]


def _draw_union(rng: np.random.Generator, ranges) -> float:
    lo, hi = ranges[rng.integers(len(ranges))]
    return float(rng.uniform(lo, hi))


def generate_task2(params: TaskTwoParams, p_patterns: int, rng: np.random.Generator):
    """Training rate signals drawn from the interval unions, fixed test signal.

    Returns ``(train, test)``.
    """
    out = []
    for split in ("train", "test"):
        signals, inputs = [], []
        for _ in range(p_patterns):
            if split == "train":
                sig = RateSignal(_draw_union(rng, params.a_ranges), _draw_union(rng, params.b_ranges),
                                 _draw_union(rng, params.f_ranges), params.phase)
            else:
                sig = RateSignal(params.test_a, params.test_b, params.test_f, params.phase)
            signals.append(sig)
            inputs.append([modulated_poisson(sig, params.duration, rng) for _ in range(params.e)])
        out.append(Dataset(split, inputs, signals=signals))
    return out[0], out[1]


def clipped_rate_integral(sig: RateSignal, a: float, b: float) -> float:
    """Exact integral of ``max(0, A + B sin(2 pi f t + phase))`` over ``[a, b]``."""
    if b <= a:
        return 0.0
    A, B = sig.a_offset, sig.b_amplitude
    w = 2 * math.pi * sig.freq
    if B == 0 or w == 0:
        return max(float(sig.raw(a)), 0.0) * (b - a)
    th_a, th_b = w * a + sig.phase, w * b + sig.phase

    def prim(th):
        return A * th - B * math.cos(th)

    cuts = [th_a, th_b]
    if abs(A) < abs(B):
        base = math.asin(-A / B)
        for root in (base, math.pi - base):
            n0 = math.ceil((th_a - root) / (2 * math.pi))
            th = root + n0 * 2 * math.pi
            while th < th_b:
                if th > th_a:
                    cuts.append(th)
                th += 2 * math.pi
    cuts.sort()
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if A + B * math.sin(0.5 * (lo + hi)) > 0:
            total += prim(hi) - prim(lo)
    return total / w


def window_target(sig: RateSignal, t: float, params: TaskTwoParams) -> float:
    """Normalised mean rate over ``(t - delay - window, t - delay)``; zero before onset."""
    hi = t - params.delay
    lo = hi - params.window
    integral = clipped_rate_integral(sig, max(lo, 0.0), max(hi, 0.0))
    return integral / params.window / params.normalizer


def task2_targets(dataset: Dataset, sample_times: np.ndarray, params: TaskTwoParams) -> np.ndarray:
    """Per-sample targets, pattern-major, matching stacked state rows."""
    return np.array([[window_target(sig, float(t), params) for t in sample_times]
                     for sig in dataset.signals]).reshape(-1)
