"""Test-time injection of synapse and square-law mismatch.

Three multiplicative perturbations are modelled, each drawn as
``max(floor, Normal(1, cv))`` independently per element:

* ``decay``: scales the PSC decay constant of each readout synapse,
* ``gain``: scales the PSC amplitude of each readout synapse,
* ``cni``: scales the output of each square-law block (one per dendritic
  branch, or per perceptron for the square PPR variant).

Because the decay constant differs from synapse to synapse, readout states
are recomputed from the liquid spike trains instead of the shared state
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .der_readout import ReadoutPair, branch_nl, squash
from .ppr_readout import PerceptronBank, apply_squash
from .spike_core import KernelParams, SpikeTrain, flatten_trains, num_samples_for

FLOOR = 0.05
MODES = {
    "none": ("",),
    "tau": ("tau",),
    "i0": ("i0",),
    "cni": ("cni",),
    "all": ("tau", "i0", "cni"),
}


@dataclass(frozen=True)
class VariationSpec:
    cv_tau: float = 0.0
    cv_i0: float = 0.0
    cv_cni: float = 0.0
    seed: int = 0
    per_branch: bool = False

    def __post_init__(self):
        if min(self.cv_tau, self.cv_i0, self.cv_cni) < 0:
            raise ValueError("coefficients of variation must be non-negative")

    @classmethod
    def worst_case(cls, seed: int = 0, mode: str = "all", per_branch: bool = False) -> "VariationSpec":
        """Worst-case Monte-Carlo spreads of the DPI synapse and square-law circuits."""
        keep = MODES[mode]
        return cls(0.101 if "tau" in keep else 0.0,
                   0.13 if "i0" in keep else 0.0,
                   0.18 if "cni" in keep else 0.0,
                   seed, per_branch)


@dataclass(frozen=True)
class VariationDraw:
    gain: np.ndarray  # (num_synapses,)
    decay: np.ndarray  # (num_synapses,)
    cni: np.ndarray  # (num_branches,)

    @classmethod
    def identity(cls, num_branches: int, synapses_per_branch: int) -> "VariationDraw":
        n = num_branches * synapses_per_branch
        return cls(np.ones(n), np.ones(n), np.ones(num_branches))


def _multipliers(rng: np.random.Generator, cv: float, size: int, floor: float = FLOOR) -> np.ndarray:
    if cv == 0:
        return np.ones(size)
    return np.maximum(rng.normal(1.0, cv, size=size), floor)


def draw_variation(spec: VariationSpec, num_branches: int, synapses_per_branch: int,
                   rng: np.random.Generator | None = None) -> VariationDraw:
    """Independent multipliers for every synapse and every square-law block.

    Synapses are ordered branch-major. With ``spec.per_branch`` the synapse
    multipliers are shared by all synapses of a branch.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n_syn = num_branches * synapses_per_branch
    if spec.per_branch:
        gain = np.repeat(_multipliers(rng, spec.cv_i0, num_branches), synapses_per_branch)
        decay = np.repeat(_multipliers(rng, spec.cv_tau, num_branches), synapses_per_branch)
    else:
        gain = _multipliers(rng, spec.cv_i0, n_syn)
        decay = _multipliers(rng, spec.cv_tau, n_syn)
    cni = _multipliers(rng, spec.cv_cni, num_branches)
    return VariationDraw(gain, decay, cni)


def synapse_states(patterns: Sequence[Sequence[SpikeTrain]], afferents: np.ndarray,
                   kernel: KernelParams, sample_period: float,
                   gain: np.ndarray, decay: np.ndarray) -> np.ndarray:
    """Per-synapse sampled states with individual decay constant and gain.

    ``afferents[s]`` is the liquid channel feeding synapse ``s``. Returns an
    array of shape ``(num_patterns * num_samples, num_synapses)``.
    """
    afferents = np.asarray(afferents, dtype=np.intp)
    n_syn = afferents.size
    tau = kernel.tau_decay * np.asarray(decay, dtype=np.float64)
    rows = []
    for trains in patterns:
        duration = trains[0].duration
        t_samples = np.arange(num_samples_for(duration, sample_period)) * sample_period
        times, channels = flatten_trains(trains)
        order = np.argsort(channels, kind="stable")
        times, channels = times[order], channels[order]
        starts = np.searchsorted(channels, np.arange(len(trains) + 1))
        counts = starts[afferents + 1] - starts[afferents]
        syn_idx = np.repeat(np.arange(n_syn), counts)
        spike_idx = np.concatenate(
            [np.arange(starts[a], starts[a + 1]) for a in afferents]) if n_syn else np.empty(0, int)
        out = np.zeros((n_syn, t_samples.size))
        if spike_idx.size:
            lag = t_samples[None, :] - times[spike_idx][:, None]
            pos = np.maximum(lag, 0.0)
            td = tau[syn_idx][:, None]
            h = kernel.i0 * (np.exp(-pos / td) - np.exp(-pos / kernel.tau_rise))
            np.add.at(out, syn_idx, np.where(lag >= 0.0, h, 0.0))
        rows.append(out.T * gain[None, :])
    return np.concatenate(rows, axis=0)


def der_outputs_with_variation(pair: ReadoutPair, patterns, kernel: KernelParams,
                               sample_period: float, draw: VariationDraw) -> np.ndarray:
    m, k = pair.positive.m, pair.positive.k
    afferents = np.concatenate([pair.positive.wiring.ravel(), pair.negative.wiring.ravel()])
    x = synapse_states(patterns, afferents, kernel, sample_period, draw.gain, draw.decay)
    x = x.reshape(-1, 2, m, k)
    b = branch_nl(x.sum(axis=-1), pair.nl) * draw.cni.reshape(2, m)[None]
    f = b.sum(axis=-1)
    return squash(f[:, 0] - f[:, 1], pair.squash)


def ppr_outputs_with_variation(bank: PerceptronBank, patterns, kernel: KernelParams,
                               sample_period: float, draw: VariationDraw, squash_kind: str,
                               variant: str = "sign", nl=None, rho: float | None = None) -> np.ndarray:
    n, d = bank.n, bank.d
    afferents = np.tile(np.arange(d), n)
    x = synapse_states(patterns, afferents, kernel, sample_period, draw.gain, draw.decay)
    x = x.reshape(-1, n, d)
    h = np.einsum("sic,ic->si", x, bank.weights[:, :d]) + bank.weights[:, d][None, :]
    if variant == "square":
        mag = np.square(h) / nl.x_thr
        if np.isfinite(nl.x_sat):
            mag = np.minimum(mag, nl.x_sat)
        votes = np.sign(h) * mag * draw.cni[None, :]
    else:
        votes = np.where(h >= 0, 1.0, -1.0)
    return apply_squash(votes.sum(axis=1), squash_kind, bank.n if rho is None else rho)


def evaluate_with_variation(readout, patterns, kernel: KernelParams, sample_period: float,
                            draw: VariationDraw, **ppr_kwargs) -> np.ndarray:
    """Outputs of a trained readout on ``patterns`` (liquid trains) under ``draw``.

    ``readout`` is a :class:`ReadoutPair` or a :class:`PerceptronBank`; for
    the latter pass ``squash_kind`` and optionally ``variant``, ``nl`` and
    ``rho``. Rows follow pattern order, then sample order.
    """
    if isinstance(readout, ReadoutPair):
        return der_outputs_with_variation(readout, patterns, kernel, sample_period, draw)
    if isinstance(readout, PerceptronBank):
        return ppr_outputs_with_variation(readout, patterns, kernel, sample_period, draw, **ppr_kwargs)
    raise TypeError(f"unsupported readout {type(readout).__name__}")


def draw_for(readout, spec: VariationSpec, rng=None) -> VariationDraw:
    """Draw shaped for ``readout``: branches are dendrites or perceptrons."""
    if isinstance(readout, ReadoutPair):
        return draw_variation(spec, 2 * readout.positive.m, readout.positive.k, rng)
    return draw_variation(spec, readout.n, readout.d, rng)


__all__ = [
    "VariationSpec", "VariationDraw", "draw_variation", "evaluate_with_variation",
    "synapse_states", "draw_for",
]
