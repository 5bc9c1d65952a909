"""Network-rewiring (NRW) training of a :class:`ReadoutPair`.

Each iteration samples a target set of existing synapses, scores them with
the correlation fitness ``c = sign * <x_ij * v_j * (t - y)>``, and tries to
replace the worst one by the best of a random set of silent candidate
afferents placed on the same branch. A swap is kept only if the dataset
MAE strictly drops; after ``max_loc`` consecutive failures the next swap is
forced through to leave a local minimum. The best wiring seen is returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .der_readout import ReadoutPair, branch_drives, branch_nl, squash

FITNESS_MODES = ("linear", "signum")


@dataclass(frozen=True)
class TrainerConfig:
    n_t: int = 15
    n_r: int = 25
    max_iter: int = 1000
    max_loc: int = 30
    seed: int = 0
    fitness: str = "linear"

    def validate(self, m: int, k: int, d: int) -> None:
        if not 1 <= self.n_t <= 2 * m * k:
            raise ValueError(f"n_t must lie in [1, {2 * m * k}], got {self.n_t}")
        if not 1 <= self.n_r <= d:
            raise ValueError(f"n_r must lie in [1, {d}], got {self.n_r}")
        if self.max_iter < 1 or self.max_loc < 1:
            raise ValueError("max_iter and max_loc must be >= 1")
        if self.fitness not in FITNESS_MODES:
            raise ValueError(f"fitness must be one of {FITNESS_MODES}")


@dataclass
class TrainingTrace:
    initial_mae: float
    mae: list[float] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)
    escaped: list[bool] = field(default_factory=list)
    best_mae: float = np.inf
    best_iteration: int = 0  # 0 means the initial wiring

    @property
    def accepted_count(self) -> int:
        return int(sum(self.accepted))

    @property
    def escape_count(self) -> int:
        return int(sum(self.escaped))

    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(np.concatenate([[self.initial_mae], self.mae]))[1:]


def mae(targets, outputs) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    if targets.shape != outputs.shape:
        raise ValueError("targets and outputs must have equal length")
    if targets.size == 0:
        raise ValueError("mae of an empty dataset is undefined")
    return float(np.mean(np.abs(targets - outputs)))


def _error_signal(targets, outputs, mode: str) -> np.ndarray:
    err = np.asarray(targets, dtype=np.float64) - np.asarray(outputs, dtype=np.float64)
    if mode == "signum":
        return np.sign(err)
    if mode != "linear":
        raise ValueError(f"unknown fitness mode {mode!r}")
    return err


def fitness(pair: ReadoutPair, cell_sign: int, j: int, i: int, X, targets, outputs,
            mode: str = "linear") -> float:
    """Correlation fitness of slot ``i`` on branch ``j`` of one cell.

    ``cell_sign`` is +1 for the positive cell and -1 for the negative one;
    ``outputs`` are the pair outputs under the current wiring.
    """
    cell = pair.positive if cell_sign > 0 else pair.negative
    X = np.asarray(X, dtype=np.float64)
    v = branch_drives(cell, X)[:, j]
    err = _error_signal(targets, outputs, mode)
    return float(cell_sign * np.mean(X[:, cell.wiring[j, i]] * v * err))


def fitness_ablation_signum(pair, cell_sign, j, i, X, targets, outputs) -> float:
    """Fitness with ``signum(t - y)`` in place of ``t - y`` (``signum(0) = 0``)."""
    return fitness(pair, cell_sign, j, i, X, targets, outputs, mode="signum")


class NRWState:
    """Cached branch drives and outputs for incremental swap evaluation."""

    def __init__(self, pair: ReadoutPair, X, targets, config: TrainerConfig):
        self.pair = pair
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != pair.positive.d:
            raise ValueError(f"states must have shape (N, {pair.positive.d})")
        if self.X.shape[0] != self.targets.size or self.targets.size == 0:
            raise ValueError("need one target per (non-empty) state row")
        config.validate(pair.positive.m, pair.positive.k, pair.positive.d)
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.V = [branch_drives(c, self.X) for c in pair.cells]
        self.Bv = [branch_nl(v, pair.nl) for v in self.V]
        self.f = [b.sum(axis=1) for b in self.Bv]
        self.y = squash(self.f[0] - self.f[1], pair.squash)
        self.mae = mae(self.targets, self.y)
        self.stall = 0
        self.trace = TrainingTrace(initial_mae=self.mae, best_mae=self.mae)
        self.best = pair.copy()

    def _try(self, c: int, j: int, old: int, new: int):
        v = self.V[c][:, j] - self.X[:, old] + self.X[:, new]
        b = branch_nl(v, self.pair.nl)
        f = self.f[c] - self.Bv[c][:, j] + b
        z = f - self.f[1] if c == 0 else self.f[0] - f
        y = squash(z, self.pair.squash)
        return v, b, f, y, mae(self.targets, y)

    def _commit(self, c, j, i, new, v, b, f, y, err):
        self.pair.cells[c].wiring[j, i] = new
        self.V[c][:, j] = v
        self.Bv[c][:, j] = b
        self.f[c] = f
        self.y = y
        self.mae = err


def nrw_iteration(state: NRWState) -> bool:
    """One target/replacement round.

    Returns True only when the swap strictly lowered the MAE; forced escape
    commits return False and are flagged in ``state.trace.escaped``.
    """
    pair, cfg, rng = state.pair, state.config, state.rng
    m, k, d = pair.positive.m, pair.positive.k, pair.positive.d
    X = state.X
    err = _error_signal(state.targets, state.y, cfg.fitness)

    # target set pooled over both cells; pool index = cell*m*k + branch*k + slot
    picks = np.sort(rng.choice(2 * m * k, size=cfg.n_t, replace=False))
    cells, rem = np.divmod(picks, m * k)
    branches, slots = np.divmod(rem, k)
    signs = np.where(cells == 0, 1.0, -1.0)
    aff = np.array([pair.cells[c].wiring[j, i] for c, j, i in zip(cells, branches, slots)])
    v_host = np.stack([state.V[c][:, j] for c, j in zip(cells, branches)], axis=1)
    scores = signs * np.mean(X[:, aff] * v_host * err[:, None], axis=0)
    w = int(np.argmin(scores))  # first minimum == lowest pool index
    c, j, i = int(cells[w]), int(branches[w]), int(slots[w])
    sign = signs[w]

    cands = np.sort(rng.choice(d, size=cfg.n_r, replace=False))
    cand_scores = sign * np.mean(X[:, cands] * (state.V[c][:, j] * err)[:, None], axis=0)
    new = int(cands[int(np.argmax(cand_scores))])
    old = int(pair.cells[c].wiring[j, i])

    v, b, f, y, new_mae = state._try(c, j, old, new)
    accepted = escaped = False
    if new_mae < state.mae:
        state._commit(c, j, i, new, v, b, f, y, new_mae)
        state.stall = 0
        accepted = True
    else:
        state.stall += 1
        if state.stall >= cfg.max_loc:
            state._commit(c, j, i, new, v, b, f, y, new_mae)
            state.stall = 0
            escaped = True

    tr = state.trace
    tr.mae.append(state.mae)
    tr.accepted.append(accepted)
    tr.escaped.append(escaped)
    if state.mae < tr.best_mae:
        tr.best_mae = state.mae
        tr.best_iteration = len(tr.mae)
        state.best = pair.copy()
    return accepted


def train(pair: ReadoutPair, X, targets, config: TrainerConfig = TrainerConfig()):
    """Run ``config.max_iter`` NRW iterations.

    ``pair`` is rewired in place and finally restored to the best wiring
    observed (the initial wiring counts). Returns ``(pair, trace)``.
    """
    state = NRWState(pair, X, targets, config)
    for _ in range(config.max_iter):
        nrw_iteration(state)
    pair.positive.wiring[:] = state.best.positive.wiring
    pair.negative.wiring[:] = state.best.negative.wiring
    return pair, state.trace
