"""Parallel perceptron readout trained with the p-delta rule.

Inputs are augmented with a trailing constant 1 so the last weight acts as
the bias. Every weight vector is kept at unit Euclidean norm.

Output squashes (``g`` applied to the vote sum ``p``):

``sign01``
    1 if ``p >= 0`` else 0, for two-class problems.
``clipped``
    ``clamp(p / rho, -1, 1)``, for approximation in ``[-1, 1]``.
``sigmoid_half``
    ``1 / (1 + exp(-p / 2))``, matching the DER squash for approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .der_readout import NonlinearityParams, sigmoid_half

PPR_SQUASHES = ("sign01", "clipped", "sigmoid_half")
VARIANTS = ("sign", "square")


@dataclass
class PerceptronBank:
    weights: np.ndarray  # (n, d + 1), last column is the bias weight

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1

    @classmethod
    def random(cls, n: int, d: int, rng: np.random.Generator) -> "PerceptronBank":
        w = rng.normal(size=(n, d + 1))
        return cls(w / np.linalg.norm(w, axis=1, keepdims=True))

    def copy(self) -> "PerceptronBank":
        return PerceptronBank(self.weights.copy())


@dataclass(frozen=True)
class PDeltaParams:
    eta: float = 0.01
    epsilon: float = 0.0
    gamma: float = 0.05
    mu: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if min(self.epsilon, self.gamma, self.mu) < 0:
            raise ValueError("epsilon, gamma and mu must be non-negative")


def augment(X) -> np.ndarray:
    """Append the constant bias input to a state vector or matrix."""
    X = np.asarray(X, dtype=np.float64)
    return np.concatenate([X, np.ones(X.shape[:-1] + (1,))], axis=-1)


def perceptron_out(w, x_aug):
    """+1 where ``w . x >= 0``, else -1."""
    return np.where(np.asarray(x_aug) @ np.asarray(w) >= 0, 1, -1)


def _square_votes(h, nl: NonlinearityParams):
    mag = np.square(h) / nl.x_thr
    if not math.isinf(nl.x_sat):
        mag = np.minimum(mag, nl.x_sat)
    return np.sign(h) * mag


def apply_squash(p, squash: str, rho: float = 1.0):
    p = np.asarray(p, dtype=np.float64)
    if squash == "sign01":
        return np.where(p >= 0, 1.0, 0.0)
    if squash == "clipped":
        return np.clip(p / rho, -1.0, 1.0)
    if squash == "sigmoid_half":
        return sigmoid_half(p)
    raise ValueError(f"unknown squash {squash!r}")


def vote_sum(bank: PerceptronBank, x_aug, variant: str = "sign", nl: NonlinearityParams | None = None):
    """Sum of per-perceptron outputs, ``x_aug`` may be ``(d+1,)`` or ``(N, d+1)``."""
    h = np.asarray(x_aug) @ bank.weights.T
    if variant == "sign":
        return np.where(h >= 0, 1.0, -1.0).sum(axis=-1)
    if variant == "square":
        return _square_votes(h, nl).sum(axis=-1)
    raise ValueError(f"unknown variant {variant!r}")


def bank_out(bank: PerceptronBank, x_aug, squash: str = "sign01", rho: float | None = None,
             variant: str = "sign", nl: NonlinearityParams | None = None):
    """Readout output ``g(p)``; ``rho`` defaults to ``n``."""
    return apply_squash(vote_sum(bank, x_aug, variant, nl), squash, bank.n if rho is None else rho)


def ppr_variant_square(bank: PerceptronBank, x_aug, nl: NonlinearityParams):
    """Vote sum with each sign replaced by ``sign(h) * min(h**2 / x_thr, x_sat)``."""
    return vote_sum(bank, x_aug, "square", nl)


def pdelta_coefficients(bank: PerceptronBank, x_aug, target: float, params: PDeltaParams,
                        squash: str = "sign01", rho: float | None = None, variant: str = "sign",
                        nl: NonlinearityParams | None = None) -> np.ndarray:
    """Per-perceptron step coefficient of the p-delta rule (0 means untouched).

    -1 or +1 push a wrongly voting perceptron across the boundary, ``+mu`` or
    ``-mu`` push a correct one out of the ``gamma`` margin.
    """
    x_aug = np.asarray(x_aug, dtype=np.float64)
    eps, gamma, mu = params.epsilon, params.gamma, params.mu
    o_hat = float(bank_out(bank, x_aug, squash, rho, variant, nl))
    h = bank.weights @ x_aug
    coef = np.zeros(bank.n)
    coef[(o_hat > target + eps) & (h >= 0)] = -1.0
    coef[(o_hat < target - eps) & (h < 0)] = 1.0
    coef[(o_hat <= target + eps) & (h >= 0) & (h < gamma)] = mu
    coef[(o_hat >= target - eps) & (h < 0) & (h > -gamma)] = -mu
    return coef


def pdelta_update(bank: PerceptronBank, x_aug, target: float, params: PDeltaParams,
                  squash: str = "sign01", rho: float | None = None, variant: str = "sign",
                  nl: NonlinearityParams | None = None, eta: float | None = None) -> PerceptronBank:
    """One p-delta step on a single sample, returning a new bank.

    Vectors that moved are rescaled to unit norm; the rest are untouched.
    """
    x_aug = np.asarray(x_aug, dtype=np.float64)
    eta = params.eta if eta is None else eta
    coef = pdelta_coefficients(bank, x_aug, target, params, squash, rho, variant, nl)
    w = bank.weights.copy()
    moved = coef != 0
    if moved.any():
        w[moved] += eta * coef[moved, None] * x_aug[None, :]
        norms = np.linalg.norm(w[moved], axis=1, keepdims=True)
        w[moved] = np.where(norms > 0, w[moved] / np.where(norms > 0, norms, 1.0), bank.weights[moved])
    return PerceptronBank(w)


_SQ = {"sign01": 0, "clipped": 1, "sigmoid_half": 2}


@numba.njit(cache=True)
def _epoch(W, X, targets, order, eta, eps, gamma, mu, sq, rho, square, x_thr, x_sat):
    n, D = W.shape
    h = np.empty(n)
    for s in order:
        x = X[s]
        p = 0.0
        for i in range(n):
            acc = 0.0
            for c in range(D):
                acc += W[i, c] * x[c]
            h[i] = acc
            if square:
                mag = acc * acc / x_thr
                if mag > x_sat:
                    mag = x_sat
                if acc > 0:
                    p += mag
                elif acc < 0:
                    p -= mag
            else:
                p += 1.0 if acc >= 0 else -1.0
        if sq == 0:
            o_hat = 1.0 if p >= 0 else 0.0
        elif sq == 1:
            o_hat = min(max(p / rho, -1.0), 1.0)
        else:
            o_hat = 0.5 * (1.0 + math.tanh(p / 4.0))
        t = targets[s]
        for i in range(n):
            hi = h[i]
            coef = 0.0
            if o_hat > t + eps and hi >= 0:
                coef = -1.0
            elif o_hat < t - eps and hi < 0:
                coef = 1.0
            elif o_hat <= t + eps and 0 <= hi < gamma:
                coef = mu
            elif o_hat >= t - eps and -gamma < hi < 0:
                coef = -mu
            if coef != 0.0:
                norm = 0.0
                for c in range(D):
                    W[i, c] += eta * coef * x[c]
                    norm += W[i, c] * W[i, c]
                norm = math.sqrt(norm)
                if norm > 0:
                    for c in range(D):
                        W[i, c] /= norm


@dataclass
class PDeltaTrace:
    mae: list[float]
    best_epoch: int


def pdelta_train(bank: PerceptronBank, X_aug, targets, params: PDeltaParams, epochs: int,
                 rng: np.random.Generator, squash: str = "sign01", rho: float | None = None,
                 variant: str = "sign", nl: NonlinearityParams | None = None):
    """Shuffled per-sample p-delta epochs with ``eta / sqrt(epoch)`` decay.

    ``targets`` live in the output space of ``squash``. Returns the weights
    of the epoch with the lowest training MAE (epoch 0 is the input bank)
    and the per-epoch MAE trace.
    """
    if variant == "square" and nl is None:
        raise ValueError("the square variant needs NonlinearityParams")
    X_aug = np.ascontiguousarray(X_aug, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    rho = float(bank.n if rho is None else rho)
    x_thr = nl.x_thr if nl is not None else 1.0
    x_sat = nl.x_sat if nl is not None else math.inf

    def err(w):
        out = bank_out(PerceptronBank(w), X_aug, squash, rho, variant, nl)
        return float(np.mean(np.abs(out - targets)))

    W = bank.weights.copy()
    trace = [err(W)]
    best_w, best_epoch = W.copy(), 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(targets))
        _epoch(W, X_aug, targets, order, params.eta / math.sqrt(epoch), params.epsilon,
               params.gamma, params.mu, _SQ[squash], rho, variant == "square", x_thr, x_sat)
        trace.append(err(W))
        if trace[-1] < trace[best_epoch]:
            best_w, best_epoch = W.copy(), epoch
    return PerceptronBank(best_w), PDeltaTrace(trace, best_epoch)
