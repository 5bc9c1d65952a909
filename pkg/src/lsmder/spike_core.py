"""Spike trains, PSC filtering and sampled state vectors.

Spike times are in seconds throughout. Every stochastic function takes an
explicit ``numpy.random.Generator`` so results are reproducible from a seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SpikeTrain:
    """Strictly increasing spike times inside ``[0, duration)``."""

    times: np.ndarray
    duration: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if times.size:
            if times[0] < 0 or times[-1] >= self.duration:
                raise ValueError("spike times must lie in [0, duration)")
            if np.any(np.diff(times) <= 0):
                raise ValueError("spike times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return self.times.size

    @classmethod
    def from_unsorted(cls, times, duration: float) -> "SpikeTrain":
        """Sort, drop out-of-window spikes and collapse exact duplicates."""
        times = np.asarray(times, dtype=np.float64)
        times = times[(times >= 0.0) & (times < duration)]
        return cls(np.unique(times), duration)

    @classmethod
    def empty(cls, duration: float) -> "SpikeTrain":
        return cls(np.empty(0), duration)

    def merged(self, other: "SpikeTrain") -> "SpikeTrain":
        if other.duration != self.duration:
            raise ValueError("cannot merge trains of different duration")
        return SpikeTrain.from_unsorted(np.concatenate([self.times, other.times]), self.duration)


@dataclass(frozen=True)
class KernelParams:
    """Double-exponential PSC kernel ``i0 * (exp(-t/tau_decay) - exp(-t/tau_rise))``.

    When ``i0`` is omitted it is set so that the kernel peaks at exactly 1.
    """

    tau_decay: float = 0.030
    tau_rise: float = 0.0075
    i0: float | None = None

    def __post_init__(self):
        if not self.tau_decay > self.tau_rise > 0:
            raise ValueError(
                f"need tau_decay > tau_rise > 0, got {self.tau_decay}, {self.tau_rise}"
            )
        if self.i0 is None:
            t = self.peak_time
            peak = math.exp(-t / self.tau_decay) - math.exp(-t / self.tau_rise)
            object.__setattr__(self, "i0", 1.0 / peak)
        elif self.i0 <= 0:
            raise ValueError(f"i0 must be positive, got {self.i0}")

    @property
    def peak_time(self) -> float:
        """Lag after a spike at which the kernel is maximal."""
        td, tr = self.tau_decay, self.tau_rise
        return td * tr / (td - tr) * math.log(td / tr)

    def __call__(self, lag):
        """Kernel value at ``lag`` seconds after a spike (0 for negative lags)."""
        lag = np.asarray(lag, dtype=np.float64)
        pos = np.maximum(lag, 0.0)
        h = self.i0 * (np.exp(-pos / self.tau_decay) - np.exp(-pos / self.tau_rise))
        return np.where(lag >= 0.0, h, 0.0)


@dataclass(frozen=True)
class RateSignal:
    """Sinusoidally modulated firing rate ``a + b*sin(2*pi*freq*t + phase)`` in Hz."""

    a_offset: float
    b_amplitude: float
    freq: float
    phase: float = 0.0

    @property
    def max_rate(self) -> float:
        return self.a_offset + abs(self.b_amplitude)

    def raw(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.a_offset + self.b_amplitude * np.sin(2 * np.pi * self.freq * t + self.phase)

    def __call__(self, t):
        """Rate clipped at zero so it is always a valid Poisson intensity."""
        return np.maximum(self.raw(t), 0.0)


@dataclass
class StateMatrix:
    """Sampled PSC states, rows are sample instants ``i * sample_period``."""

    samples: np.ndarray
    sample_period: float
    sample_times: np.ndarray = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_times is None:
            self.sample_times = np.arange(self.samples.shape[0]) * self.sample_period

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]


def _check_rng(rng):
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    return rng


def poisson_train(rate: float, duration: float, rng: np.random.Generator) -> SpikeTrain:
    """Homogeneous Poisson spike train."""
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = _check_rng(rng)
    count = rng.poisson(rate * duration)
    return SpikeTrain.from_unsorted(rng.uniform(0.0, duration, size=count), duration)


def jitter_train(template: SpikeTrain, std: float, rng: np.random.Generator) -> SpikeTrain:
    """Shift every spike by independent N(0, std) noise.

    Spikes pushed outside ``[0, duration)`` are dropped.
    """
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    if std == 0 or len(template) == 0:
        return template
    rng = _check_rng(rng)
    shifted = template.times + rng.normal(0.0, std, size=len(template))
    return SpikeTrain.from_unsorted(shifted, template.duration)


def modulated_poisson(rate_signal: RateSignal, duration: float, rng: np.random.Generator) -> SpikeTrain:
    """Inhomogeneous Poisson train by thinning against ``a + |b|``."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = _check_rng(rng)
    r_max = rate_signal.max_rate
    if r_max <= 0:
        return SpikeTrain.empty(duration)
    count = rng.poisson(r_max * duration)
    candidates = rng.uniform(0.0, duration, size=count)
    keep = rng.uniform(0.0, r_max, size=count) < rate_signal(candidates)
    return SpikeTrain.from_unsorted(candidates[keep], duration)


def psc_value(train: SpikeTrain, kernel: KernelParams, t: float) -> float:
    """Filtered waveform ``sum_f h(t - t_f)`` at time ``t`` (causal)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    past = train.times[train.times <= t]
    return float(np.sum(kernel(t - past)))


def filter_spikes(
    times: np.ndarray,
    channels: np.ndarray,
    num_channels: int,
    sample_times: np.ndarray,
    kernel: KernelParams,
) -> np.ndarray:
    """Vectorised core of :func:`sample_states`.

    ``times``/``channels`` describe every spike of every channel as flat
    arrays. Returns an array of shape ``(len(sample_times), num_channels)``.
    """
    out = np.zeros((num_channels, len(sample_times)))
    if len(times):
        contrib = kernel(sample_times[None, :] - np.asarray(times)[:, None])
        np.add.at(out, np.asarray(channels), contrib)
    return out.T


def num_samples_for(duration: float, sample_period: float) -> int:
    # tolerance guards against 0.5 / 0.025 landing just below an integer
    return int(math.floor(duration / sample_period + 1e-9))


def flatten_trains(trains: Sequence[SpikeTrain]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate spike times with a parallel array of channel indices."""
    if not trains:
        return np.empty(0), np.empty(0, dtype=np.intp)
    times = np.concatenate([tr.times for tr in trains])
    channels = np.repeat(np.arange(len(trains)), [len(tr) for tr in trains])
    return times, channels


def sample_states(
    trains: Sequence[SpikeTrain], kernel: KernelParams, sample_period: float = 0.025
) -> StateMatrix:
    """Filter each train with ``kernel`` and sample every ``sample_period`` seconds.

    Column ``c`` of the result corresponds to ``trains[c]``; row ``i`` is the
    state at ``t = i * sample_period``.
    """
    if sample_period <= 0:
        raise ValueError("sample_period must be positive")
    if not trains:
        raise ValueError("need at least one train")
    durations = {tr.duration for tr in trains}
    if len(durations) != 1:
        raise ValueError(f"all trains must share one duration, got {sorted(durations)}")
    duration = durations.pop()
    t_samples = np.arange(num_samples_for(duration, sample_period)) * sample_period
    times, channels = flatten_trains(trains)
    samples = filter_spikes(times, channels, len(trains), t_samples, kernel)
    return StateMatrix(samples, sample_period, t_samples)


def mean_isi(trains: Sequence[SpikeTrain]) -> float:
    """Mean inter-spike interval of the pooled output, ``1 / (L * mean_rate)``."""
    if not trains:
        raise ValueError("need at least one train")
    rates = np.array([len(tr) / tr.duration for tr in trains])
    if rates.sum() == 0:
        raise ZeroDivisionError("mean ISI is undefined without any spikes")
    return 1.0 / (len(trains) * rates.mean())


def optimal_tau_decay(
    n_isi: float, slope: float = 52.83, intercept: float = -3.1, minimum: float = 1.0
) -> float:
    """Affine fit of the best PSC decay constant against pooled mean ISI.

    Input and output share the fit's unit (milliseconds by default), and the
    result is floored at ``minimum``.
    """
    if n_isi <= 0:
        raise ValueError("n_isi must be positive")
    return max(slope * n_isi + intercept, minimum)
