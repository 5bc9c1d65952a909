"""Recurrent pool of leaky integrate-and-fire neurons (the liquid).

Construction follows the usual column recipe: neurons on a 3-D integer grid,
distance-dependent random connectivity ``C * exp(-(D/lambda)**2)`` with a
class-specific ``C``, gamma-distributed static weights and double-exponential
synaptic currents. Membrane potentials are in mV relative to rest and
currents in nA, so ``input_resistance`` is in MOhm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spike_core import SpikeTrain

CLASSES = ("EE", "EI", "IE", "II")


@dataclass(frozen=True)
class LifParams:
    membrane_tau: float = 0.030
    threshold: float = 15.0
    reset: float = 0.0
    resting: float = 0.0
    refractory: float = 0.003
    input_resistance: float = 1.0

    def __post_init__(self):
        if self.threshold <= self.reset:
            raise ValueError("threshold must exceed reset")
        if self.membrane_tau <= 0:
            raise ValueError("membrane_tau must be positive")
        if self.refractory < 0:
            raise ValueError("refractory must be non-negative")


@dataclass(frozen=True)
class SynapseClass:
    """Connection probability scale, mean weight (nA) and PSC time constants."""

    connect: float
    weight: float
    tau_decay: float
    tau_rise: float = 0.0005


def _default_synapses() -> dict[str, SynapseClass]:
    # first letter is the presynaptic class
    return {
        "EE": SynapseClass(0.3, 12.0, 0.003),
        "EI": SynapseClass(0.2, 24.0, 0.003),
        "IE": SynapseClass(0.4, 16.0, 0.006),
        "II": SynapseClass(0.1, 16.0, 0.006),
    }


@dataclass(frozen=True)
class LiquidConfig:
    num_neurons: int = 140
    inhibitory_fraction: float = 0.2
    lam: float = 2.0
    grid: tuple[int, int, int] | None = None
    lif_exc: LifParams = field(default_factory=LifParams)
    lif_inh: LifParams = field(default_factory=lambda: LifParams(refractory=0.002))
    synapses: dict[str, SynapseClass] = field(default_factory=_default_synapses)
    weight_cv: float = 0.5
    input_fraction: float = 0.3
    input_weight_exc: float = 30.0
    input_weight_inh: float = 15.0
    background_current: float = 13.5
    background_spread: float = 0.0
    noise_std: float = 0.0
    init_voltage: tuple[float, float] = (0.0, 0.0)
    connect_scale: float = 1.0

    def __post_init__(self):
        if self.num_neurons < 1:
            raise ValueError("num_neurons must be >= 1")
        if not 0 <= self.inhibitory_fraction < 1:
            raise ValueError("inhibitory_fraction must be in [0, 1)")
        if self.background_spread < 0:
            raise ValueError("background_spread must be non-negative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if set(self.synapses) != set(CLASSES):
            raise ValueError(f"synapses must define exactly {CLASSES}")


@dataclass(frozen=True)
class LiquidNetwork:
    positions: np.ndarray  # (L, 3) integer grid coordinates
    inhibitory: np.ndarray  # (L,) bool
    weights: np.ndarray  # (L, L) signed, [pre, post]
    input_weights: np.ndarray  # (num_inputs, L) non-negative
    config: LiquidConfig
    v_init: np.ndarray  # (L,) initial membrane potential
    background: np.ndarray  # (L,) constant bias current per neuron

    @property
    def num_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def num_connections(self) -> int:
        return int(np.count_nonzero(self.weights))

    def without_inhibition(self) -> "LiquidNetwork":
        """Copy with every inhibitory outgoing weight set to zero."""
        w = self.weights.copy()
        w[self.inhibitory, :] = 0.0
        return LiquidNetwork(self.positions, self.inhibitory, w, self.input_weights,
                             self.config, self.v_init, self.background)


def grid_shape(num_neurons: int) -> tuple[int, int, int]:
    """Most compact ``a >= b >= c`` grid holding exactly ``num_neurons`` sites.

    Falls back to ``(num_neurons, 1, 1)`` for primes.
    """
    best = (num_neurons, 1, 1)
    best_spread = num_neurons - 1
    for c in range(1, int(round(num_neurons ** (1 / 3))) + 2):
        if num_neurons % c:
            continue
        rest = num_neurons // c
        for b in range(c, int(math.isqrt(rest)) + 1):
            if rest % b:
                continue
            a = rest // b
            if a - c < best_spread:
                best, best_spread = (a, b, c), a - c
    return best


def _gamma_weights(rng: np.random.Generator, mean: float, cv: float, size) -> np.ndarray:
    if cv == 0:
        return np.full(size, mean)
    shape = 1.0 / cv**2
    return rng.gamma(shape, mean / shape, size=size)


def build_liquid(config: LiquidConfig, rng: np.random.Generator, num_inputs: int = 1) -> LiquidNetwork:
    """Place neurons on a grid and draw recurrent and input connectivity."""
    L = config.num_neurons
    dims = config.grid or grid_shape(L)
    if dims[0] * dims[1] * dims[2] < L:
        raise ValueError(f"grid {dims} too small for {L} neurons")
    coords = np.array(np.unravel_index(np.arange(L), dims)).T

    n_inh = int(round(config.inhibitory_fraction * L))
    inhibitory = np.zeros(L, dtype=bool)
    inhibitory[rng.choice(L, size=n_inh, replace=False)] = True

    diff = coords[:, None, :] - coords[None, :, :]
    dist2 = np.sum(diff.astype(float) ** 2, axis=-1)
    profile = np.exp(-dist2 / config.lam**2)

    pre_inh = inhibitory[:, None]
    post_inh = inhibitory[None, :]
    cls_index = pre_inh.astype(int) * 2 + post_inh.astype(int)  # EE=0 EI=1 IE=2 II=3
    connect = np.array([config.synapses[c].connect for c in CLASSES])[cls_index]
    mean_w = np.array([config.synapses[c].weight for c in CLASSES])[cls_index]

    prob = np.clip(config.connect_scale * connect * profile, 0.0, 1.0)
    np.fill_diagonal(prob, 0.0)
    mask = rng.uniform(size=(L, L)) < prob
    weights = np.where(mask, _gamma_weights(rng, 1.0, config.weight_cv, (L, L)) * mean_w, 0.0)
    weights[inhibitory, :] *= -1.0

    input_w = np.zeros((num_inputs, L))
    n_target = int(round(config.input_fraction * L))
    for ch in range(num_inputs):
        targets = rng.choice(L, size=n_target, replace=False)
        means = np.where(inhibitory[targets], config.input_weight_inh, config.input_weight_exc)
        input_w[ch, targets] = _gamma_weights(rng, 1.0, config.weight_cv, n_target) * means

    lo, hi = config.init_voltage
    v_init = rng.uniform(lo, hi, size=L) if hi > lo else np.full(L, float(lo))
    # a spread lifts some neurons above threshold so they fire tonically
    background = config.background_current + (
        rng.uniform(0.0, config.background_spread, size=L) if config.background_spread > 0 else np.zeros(L))
    return LiquidNetwork(coords, inhibitory, weights, input_w, config, v_init, background)


def _peak_norm(tau_decay: float, tau_rise: float) -> float:
    t = tau_decay * tau_rise / (tau_decay - tau_rise) * math.log(tau_decay / tau_rise)
    return 1.0 / (math.exp(-t / tau_decay) - math.exp(-t / tau_rise))


def simulate_batch(
    network: LiquidNetwork,
    batch: Sequence[Sequence[SpikeTrain]],
    duration: float,
    dt: float = 0.0002,
    noise_seeds: Sequence[int] | None = None,
) -> list[list[SpikeTrain]]:
    """Run the liquid on several independent input patterns at once.

    Each pattern starts from the network's initial state. With
    ``config.noise_std > 0`` every pattern gets its own noise stream seeded
    by ``noise_seeds[b]`` (default: its batch index). Returns, per pattern,
    one output :class:`SpikeTrain` per liquid neuron.
    """
    cfg = network.config
    lif_e, lif_i = cfg.lif_exc, cfg.lif_inh
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > min(lif_e.membrane_tau, lif_i.membrane_tau) / 10:
        raise ValueError(f"dt={dt} too coarse for forward Euler (need <= membrane_tau/10)")
    B, L = len(batch), network.num_neurons
    n_steps = int(math.floor(duration / dt + 1e-9))
    if B == 0:
        return []
    num_inputs = network.input_weights.shape[0]

    inh = network.inhibitory
    tau_m = np.where(inh, lif_i.membrane_tau, lif_e.membrane_tau)
    thr = np.where(inh, lif_i.threshold, lif_e.threshold)
    reset = np.where(inh, lif_i.reset, lif_e.reset)
    rest = np.where(inh, lif_i.resting, lif_e.resting)
    r_in = np.where(inh, lif_i.input_resistance, lif_e.input_resistance)
    ref_steps = np.round(np.where(inh, lif_i.refractory, lif_e.refractory) / dt).astype(int)

    # excitatory-source and inhibitory-source currents use the EE and IE kernels
    kinds = []
    for cls in ("EE", "IE"):
        sc = cfg.synapses[cls]
        kinds.append((math.exp(-dt / sc.tau_decay), math.exp(-dt / sc.tau_rise),
                      _peak_norm(sc.tau_decay, sc.tau_rise)))
    w_scaled = [network.weights * kinds[0][2], network.weights * kinds[1][2]]
    w_in = network.input_weights * kinds[0][2]

    # input spikes binned per step: list of (step, pattern, channel)
    in_events: dict[int, list[tuple[int, int]]] = {}
    for b, trains in enumerate(batch):
        if len(trains) != num_inputs:
            raise ValueError(f"pattern {b} has {len(trains)} inputs, network expects {num_inputs}")
        for ch, tr in enumerate(trains):
            for s in np.floor(tr.times / dt).astype(int):
                if s < n_steps:
                    in_events.setdefault(int(s), []).append((b, ch))

    v = np.broadcast_to(network.v_init, (B, L)).copy()
    refr = np.zeros((B, L), dtype=int)
    decay_d = np.zeros((2, B, L))
    decay_r = np.zeros((2, B, L))
    fac_m = dt / tau_m
    bg = network.background
    noise_std = cfg.noise_std
    if noise_std > 0:
        seeds = range(B) if noise_seeds is None else noise_seeds
        if len(seeds) != B:
            raise ValueError("need one noise seed per pattern")
        noise_rngs = [np.random.default_rng(int(s)) for s in seeds]
    spikes_b, spikes_n, spikes_s = [], [], []

    for step in range(n_steps):
        current = (decay_d[0] - decay_r[0]) + (decay_d[1] - decay_r[1])
        if noise_std > 0:
            current += noise_std * np.stack([g.standard_normal(L) for g in noise_rngs])
        v += fac_m * (rest - v + r_in * (current + bg))
        active = refr > 0
        v[active] = reset[np.nonzero(active)[1]]
        refr[active] -= 1
        fired = v >= thr
        decay_d[0] *= kinds[0][0]
        decay_r[0] *= kinds[0][1]
        decay_d[1] *= kinds[1][0]
        decay_r[1] *= kinds[1][1]
        if fired.any():
            fb, fn = np.nonzero(fired)
            v[fb, fn] = reset[fn]
            refr[fb, fn] = ref_steps[fn]
            spikes_b.append(fb)
            spikes_n.append(fn)
            spikes_s.append(np.full(fb.size, step))
            src_inh = inh[fn]
            for kind, sel in ((0, ~src_inh), (1, src_inh)):
                if sel.any():
                    add = w_scaled[kind][fn[sel]]
                    np.add.at(decay_d[kind], fb[sel], add)
                    np.add.at(decay_r[kind], fb[sel], add)
        events = in_events.get(step)
        if events:
            eb, ech = np.array(events).T
            add = w_in[ech]
            np.add.at(decay_d[0], eb, add)
            np.add.at(decay_r[0], eb, add)

    out_b = np.concatenate(spikes_b) if spikes_b else np.empty(0, dtype=int)
    out_n = np.concatenate(spikes_n) if spikes_n else np.empty(0, dtype=int)
    out_t = (np.concatenate(spikes_s) if spikes_s else np.empty(0, dtype=int)) * dt
    order = np.lexsort((out_t, out_n, out_b))
    out_b, out_n, out_t = out_b[order], out_n[order], out_t[order]
    bounds = np.searchsorted(out_b * L + out_n, np.arange(B * L + 1))
    result = []
    for b in range(B):
        row = []
        for n in range(L):
            lo, hi = bounds[b * L + n], bounds[b * L + n + 1]
            row.append(SpikeTrain(out_t[lo:hi], duration))
        result.append(row)
    return result


def simulate(
    network: LiquidNetwork, inputs: Sequence[SpikeTrain], duration: float, dt: float = 0.0002,
    noise_seed: int = 0,
) -> list[SpikeTrain]:
    """Liquid response to one input pattern, one output train per neuron."""
    return simulate_batch(network, [inputs], duration, dt, [noise_seed])[0]
