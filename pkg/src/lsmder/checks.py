"""Self-checks with independent reference computations.

Each ``check_*`` function returns a :class:`CheckResult`; the ``verify``
command and the acceptance tests both run them.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .capacity import CellShape, bn_capacity, capacity_sweep
from .der_readout import DendriticCell, NonlinearityParams, ReadoutPair, branch_drives, cell_output, pair_output
from .nrw_trainer import TrainerConfig, fitness, mae, train
from .ppr_readout import (PDeltaParams, PerceptronBank, _epoch, _SQ, bank_out, pdelta_coefficients,
                          pdelta_update)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn):
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


# capacity ---------------------------------------------------------------------

def check_capacity() -> CheckResult:
    def run():
        rows = capacity_sweep(70, 140)
        best = max(rows, key=lambda r: r.bits).m
        small = bn_capacity(CellShape(2, 2, 3))
        err = abs(small - math.log2(21))
        return best == 14 and err < 1e-9, f"argmax m={best}, |B(2,2,3)-log2 21|={err:.2e}"
    return _timed("capacity", run)


# gradient consistency ---------------------------------------------------------

def _mse_with_weight(pair, X, t, j, i, w):
    """Squared error with a virtual analog weight ``w`` on positive-cell slot (j, i)."""
    cell = pair.positive
    v = X[:, cell.wiring].sum(axis=-1)
    v[:, j] += (w - 1.0) * X[:, cell.wiring[j, i]]
    f_pos = (v ** 2 / pair.nl.x_thr).sum(axis=-1)
    f_neg = cell_output(pair.negative, X, pair.nl)
    return float(np.mean((t - (f_pos - f_neg)) ** 2))


def check_gradient(instances: int = 100, seed: int = 0, rel_tol: float = 1e-5, h: float = 1e-4) -> CheckResult:
    """Fitness equals ``x_thr / 4`` times the negative error gradient in a virtual weight."""
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(instances):
            d, m, k, n = 12, 3, 4, 20
            nl = NonlinearityParams(float(rng.uniform(0.5, 3.0)), math.inf)
            pair = ReadoutPair.random(m, k, d, nl, "identity", rng)
            X = rng.uniform(0.0, 1.0, size=(n, d))
            t = rng.uniform(-2.0, 2.0, size=n)
            y = pair_output(pair, X)
            j, i = int(rng.integers(m)), int(rng.integers(k))
            c = fitness(pair, +1, j, i, X, t, y)
            grad = (_mse_with_weight(pair, X, t, j, i, 1 + h) - _mse_with_weight(pair, X, t, j, i, 1 - h)) / (2 * h)
            ref = -nl.x_thr / 4.0 * grad
            worst = max(worst, abs(c - ref) / max(abs(ref), 1e-12))
        return worst < rel_tol, f"max relative error {worst:.2e} over {instances} instances"
    return _timed("gradient consistency", run)


# brute-force optimum ----------------------------------------------------------

def exhaustive_optimum(X, t, m, k, nl, squash_kind) -> float:
    """Lowest MAE over every wiring of both cells (multisets per branch)."""
    d = X.shape[1]
    branches = list(itertools.combinations_with_replacement(range(d), k))
    cells = [np.array(c) for c in itertools.combinations_with_replacement(branches, m)]
    best = math.inf
    for wp in cells:
        for wn in cells:
            pair = ReadoutPair(DendriticCell(wp.copy(), d), DendriticCell(wn.copy(), d), nl, squash_kind)
            best = min(best, mae(t, pair_output(pair, X)))
    return best


def check_bruteforce(seeds: int = 100, max_iter: int = 500, required: float = 0.95,
                     config: TrainerConfig = TrainerConfig(n_t=1, n_r=2, max_loc=5)) -> CheckResult:
    """NRW reaches the exhaustive optimum on 4-line, 1x2-branch, 3-sample toys.

    The default trainer sizes are scaled to the toy: a pool of 4 synapses
    and 4 candidate afferents.
    """
    def run():
        hits = 0
        for s in range(seeds):
            rng = np.random.default_rng(s)
            X = rng.uniform(0.0, 2.0, size=(3, 4))
            t = rng.uniform(0.05, 0.95, size=3)
            nl = NonlinearityParams(1.0, math.inf)
            target = exhaustive_optimum(X, t, 1, 2, nl, "sigmoid_half")
            pair = ReadoutPair.random(1, 2, 4, nl, "sigmoid_half", rng)
            _, trace = train(pair, X, t, replace(config, max_iter=max_iter, seed=s))
            hits += trace.best_mae <= target + 1e-12
        frac = hits / seeds
        return frac >= required, f"optimum reached in {hits}/{seeds} seeds"
    return _timed("brute-force optimality", run)


# saturation limit -------------------------------------------------------------

def check_saturation_identity(evaluations: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        mismatches = 0
        for _ in range(evaluations):
            d, m, k = 20, 7, 10
            x_thr = float(rng.uniform(0.5, 10.0))
            cell = DendriticCell.random(m, k, d, rng)
            x = rng.uniform(0.0, 10.0, size=d)
            got = cell_output(cell, x, NonlinearityParams(x_thr, math.inf))
            ref = np.sum(branch_drives(cell, x) ** 2 / x_thr)
            mismatches += got != ref
        return mismatches == 0, f"{mismatches} mismatches in {evaluations} evaluations"
    return _timed("saturation limit identity", run)


# p-delta ----------------------------------------------------------------------

def pdelta_reference(W, x, target, eta, eps, gamma, mu, squash, rho):
    """Rule written case by case for one perceptron at a time.

    Returns ``(coefficients, new_weights)``.
    """
    o_hat = float(bank_out(PerceptronBank(W), x, squash, rho))
    out = W.copy()
    coefs = np.zeros(W.shape[0])
    for i in range(W.shape[0]):
        h = float(np.dot(W[i], x))
        if o_hat > target + eps and h >= 0:
            coef = -1.0
        elif o_hat < target - eps and h < 0:
            coef = 1.0
        elif o_hat <= target + eps and 0 <= h < gamma:
            coef = mu
        elif o_hat >= target - eps and -gamma < h < 0:
            coef = -mu
        else:
            continue
        coefs[i] = coef
        w = W[i] + eta * coef * x
        out[i] = w / math.sqrt(sum(float(c) * float(c) for c in w))
    return coefs, out


def check_pdelta(cases: int = 10_000, seed: int = 0, norm_tol: float = 1e-12, atol: float = 1e-14) -> CheckResult:
    """Case selection must match the reference exactly; weights to ``atol``."""
    def run():
        rng = np.random.default_rng(seed)
        case_bad = weight_bad = norm_bad = 0
        for _ in range(cases):
            n, d = int(rng.integers(1, 8)), int(rng.integers(1, 6))
            squash = ("sign01", "clipped")[int(rng.integers(2))]
            bank = PerceptronBank.random(n, d, rng)
            x = np.append(rng.normal(size=d), 1.0)
            target = float(rng.integers(2)) if squash == "sign01" else float(rng.uniform(-1, 1))
            params = PDeltaParams(eta=float(rng.uniform(0.001, 0.5)), epsilon=float(rng.uniform(0, 0.2)),
                                  gamma=float(rng.uniform(0, 1.0)), mu=float(rng.uniform(0, 2)))
            coefs = pdelta_coefficients(bank, x, target, params, squash)
            got = pdelta_update(bank, x, target, params, squash)
            ref_coefs, ref = pdelta_reference(bank.weights, x, target, params.eta, params.epsilon,
                                              params.gamma, params.mu, squash, float(n))
            fast = bank.weights.copy()
            _epoch(fast, x[None, :], np.array([target]), np.array([0]), params.eta, params.epsilon,
                   params.gamma, params.mu, _SQ[squash], float(n), False, 1.0, math.inf)
            case_bad += not np.array_equal(coefs, ref_coefs)
            untouched = ref_coefs == 0
            weight_bad += not (np.array_equal(got.weights[untouched], bank.weights[untouched])
                               and np.allclose(got.weights, ref, rtol=0, atol=atol)
                               and np.allclose(fast, ref, rtol=0, atol=atol))
            norm_bad += np.max(np.abs(np.linalg.norm(got.weights, axis=1) - 1.0)) >= norm_tol
        ok = case_bad == weight_bad == norm_bad == 0
        return ok, (f"{cases} cases: {case_bad} case mismatches, {weight_bad} weight mismatches, "
                    f"{norm_bad} norm violations")
    return _timed("p-delta contract", run)


# determinism ------------------------------------------------------------------

def check_determinism(config=None) -> CheckResult:
    from .bench import run_experiment
    from .config import ExperimentConfig, apply_overrides

    def run():
        cfg = config or apply_overrides(ExperimentConfig(), {
            "trials": "3", "p_patterns": "10", "trainer.max_iter": "50", "ppr.epochs": "5",
            "task1.t_max": "0.2"})
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        same = [(r.train_mae, r.test_mae, r.pattern_test_mae) for r in a] == \
               [(r.train_mae, r.test_mae, r.pattern_test_mae) for r in b]
        return same, f"{len(a)} records {'identical' if same else 'differ'} across reruns"
    return _timed("determinism", run)


QUICK_CHECKS = (check_capacity, check_gradient, check_saturation_identity, check_pdelta, check_determinism,
                check_bruteforce)


def run_checks(checks=QUICK_CHECKS) -> list[CheckResult]:
    return [fn() for fn in checks]
