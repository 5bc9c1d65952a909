"""Experiment harness: datasets, liquid, readout training, sweeps and records.

Each trial seed is expanded with :class:`numpy.random.SeedSequence` into
independent streams for the dataset, the liquid, the DER initial wiring,
the NRW trainer and the PPR, so any record can be regenerated from its
config digest and seed alone.
"""
from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .capacity import CellShape, bn_capacity
from .config import ExperimentConfig
from .der_readout import NonlinearityParams, ReadoutPair, choose_x_thr, classify_pattern, pair_output
from .liquid import build_liquid, simulate_batch
from .nrw_trainer import TrainingTrace, mae, train
from .ppr_readout import PerceptronBank, augment, bank_out, pdelta_train
from .spike_core import num_samples_for, sample_states
from .tasks import generate_task1, generate_task2, task2_targets
from .variation import VariationDraw, VariationSpec, draw_for, evaluate_with_variation

STREAMS = ("data", "liquid", "der", "trainer", "ppr", "noise", "variation")


@dataclass(frozen=True)
class RunRecord:
    """One readout trained on one trial; written once as a JSON line."""

    digest: str
    seed: int
    task: str
    readout: str
    params: dict
    train_mae: float
    test_mae: float
    pattern_test_mae: float | None = None
    trace: str | None = None
    timing: float = 0.0

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


class RecordWriter:
    """Single append-only sink for records, traces and tables under one directory."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.records = self.root / "records.jsonl"

    def write(self, record: RunRecord) -> None:
        with self.records.open("a") as fh:
            fh.write(record.to_json() + "\n")

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return path


def read_records(path) -> list[RunRecord]:
    return [RunRecord.from_json(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]


# trials -----------------------------------------------------------------------

def trial_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def _stream_int(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63 - 1))


@dataclass
class TrialData:
    """Liquid states and targets for one trial; test rows never reach a trainer."""

    seed: int
    X_train: np.ndarray
    t_train: np.ndarray
    X_test: np.ndarray
    t_test: np.ndarray
    samples_per_pattern: int
    liquid_train: list = field(repr=False)
    liquid_test: list = field(repr=False)
    labels_test: np.ndarray | None = None
    x_thr: float = 1.0
    mean_rate: float = 0.0


def _stack_states(liquid_out, kernel, sample_period) -> np.ndarray:
    return np.concatenate([sample_states(p, kernel, sample_period).samples for p in liquid_out], axis=0)


def prepare_trial(config: ExperimentConfig, seed: int) -> TrialData:
    """Generate the dataset, run the liquid and sample readout states."""
    rng = trial_streams(seed)
    if config.task == "spike_classification":
        _, train_set, test_set = generate_task1(config.task1, config.p_patterns, rng["data"])
        duration, num_inputs = config.task1.t_max, config.task1.e
    else:
        train_set, test_set = generate_task2(config.task2, config.p_patterns, rng["data"])
        duration, num_inputs = config.task2.duration, config.task2.e
    net = build_liquid(config.liquid, rng["liquid"], num_inputs=num_inputs)
    noise = rng["noise"].integers(2**31, size=len(train_set) + len(test_set)).tolist()
    out = simulate_batch(net, train_set.inputs + test_set.inputs, duration, config.dt, noise)
    liq_train, liq_test = out[:len(train_set)], out[len(train_set):]
    S = num_samples_for(duration, config.sample_period)
    Xtr = _stack_states(liq_train, config.kernel, config.sample_period)
    Xte = _stack_states(liq_test, config.kernel, config.sample_period)
    if config.task == "spike_classification":
        ttr = np.repeat(train_set.labels, S).astype(float)
        tte = np.repeat(test_set.labels, S).astype(float)
        labels = test_set.labels
    else:
        times = np.arange(S) * config.sample_period
        ttr = task2_targets(train_set, times, config.task2)
        tte = task2_targets(test_set, times, config.task2)
        labels = None
    x_thr = (choose_x_thr(Xtr, config.der.x_thr_fraction) if config.der.x_thr == "auto"
             else float(config.der.x_thr))
    spikes = sum(len(tr) for p in liq_train for tr in p)
    rate = spikes / (len(liq_train) * config.liquid.num_neurons * duration)
    return TrialData(seed, Xtr, ttr, Xte, tte, S, liq_train, liq_test, labels, x_thr, rate)


def _pattern_mae(outputs: np.ndarray, labels: np.ndarray | None, S: int) -> float | None:
    if labels is None:
        return None
    votes = np.array([classify_pattern(row) for row in outputs.reshape(-1, S)])
    return float(np.mean(votes != labels))


# readouts ---------------------------------------------------------------------

@dataclass
class DerResult:
    pair: ReadoutPair
    trace: TrainingTrace
    train_mae: float
    test_mae: float
    pattern_test_mae: float | None
    seconds: float


@dataclass
class PprResult:
    bank: PerceptronBank
    trace: list[float]
    train_mae: float
    test_mae: float
    pattern_test_mae: float | None
    seconds: float
    squash: str
    variant: str
    nl: NonlinearityParams | None


def der_nl(config: ExperimentConfig, trial: TrialData, x_sat: float | None = None) -> NonlinearityParams:
    return NonlinearityParams(trial.x_thr, config.der.x_sat if x_sat is None else x_sat)


def train_der(config: ExperimentConfig, trial: TrialData, m: int | None = None, k: int | None = None,
              x_sat: float | None = None, fitness: str | None = None) -> DerResult:
    """NRW-train a fresh readout pair; the initial wiring depends only on the seed."""
    m = config.der.m if m is None else m
    k = config.der.k if k is None else k
    rng = trial_streams(trial.seed)
    kind = "signum01" if config.task == "spike_classification" else "sigmoid_half"
    d = trial.X_train.shape[1]
    pair = ReadoutPair.random(m, k, d, der_nl(config, trial, x_sat), kind, rng["der"])
    tcfg = dataclasses.replace(config.trainer, seed=_stream_int(rng["trainer"]),
                               fitness=config.trainer.fitness if fitness is None else fitness)
    start = time.perf_counter()
    pair, trace = train(pair, trial.X_train, trial.t_train, tcfg)
    seconds = time.perf_counter() - start
    out_tr = pair_output(pair, trial.X_train)
    out_te = pair_output(pair, trial.X_test)
    return DerResult(pair, trace, mae(trial.t_train, out_tr), mae(trial.t_test, out_te),
                     _pattern_mae(out_te, trial.labels_test, trial.samples_per_pattern), seconds)


def ppr_outputs(config: ExperimentConfig, bank: PerceptronBank, X, squash: str, variant: str,
                nl: NonlinearityParams | None) -> np.ndarray:
    """PPR outputs mapped into the task's target range."""
    y = bank_out(bank, augment(X), squash, None, variant, nl)
    return (y + 1.0) / 2.0 if squash == "clipped" else y


def train_ppr(config: ExperimentConfig, trial: TrialData, n: int | None = None,
              variant: str | None = None, nl: NonlinearityParams | None = None) -> PprResult:
    """p-delta training of ``n`` perceptrons.

    Approximation targets in ``[0, 1]`` are trained as ``2 t - 1`` against
    the clipped squash and mapped back for scoring, or directly against the
    DER's sigmoid when ``ppr.approx_squash = sigmoid_half``.
    """
    n = config.ppr.n if n is None else n
    variant = config.ppr.variant if variant is None else variant
    if variant == "square" and nl is None:
        nl = der_nl(config, trial)
    rng = trial_streams(trial.seed)["ppr"]
    d = trial.X_train.shape[1]
    bank = PerceptronBank.random(n, d, rng)
    params = config.ppr.pdelta
    if config.task == "spike_classification":
        squash, fit_targets = "sign01", trial.t_train
    elif config.ppr.approx_squash == "sigmoid_half":
        squash, fit_targets = "sigmoid_half", trial.t_train
        params = dataclasses.replace(params, epsilon=config.ppr.epsilon_approx)
    else:
        squash, fit_targets = "clipped", 2.0 * trial.t_train - 1.0
        params = dataclasses.replace(params, epsilon=config.ppr.epsilon_approx)
    start = time.perf_counter()
    bank, tr = pdelta_train(bank, augment(trial.X_train), fit_targets, params, config.ppr.epochs,
                            rng, squash, None, variant, nl)
    seconds = time.perf_counter() - start
    scale = 0.5 if squash == "clipped" else 1.0
    out_tr = ppr_outputs(config, bank, trial.X_train, squash, variant, nl)
    out_te = ppr_outputs(config, bank, trial.X_test, squash, variant, nl)
    return PprResult(bank, [scale * e for e in tr.mae], mae(trial.t_train, out_tr),
                     mae(trial.t_test, out_te),
                     _pattern_mae(out_te, trial.labels_test, trial.samples_per_pattern),
                     seconds, squash, variant, nl)


# experiments ------------------------------------------------------------------

@dataclass
class TrialOutcome:
    """Records of one trial plus in-memory traces keyed like ``record.trace``."""

    records: list[RunRecord]
    traces: dict[str, object] = field(default_factory=dict)


def _trace_name(digest: str, seed: int, label: str) -> str:
    return f"traces/{digest[:12]}_{seed}_{label}.csv"


def _der_record(config, digest, trial, res: DerResult, label="der", params=None) -> tuple[RunRecord, str]:
    name = _trace_name(digest, trial.seed, label)
    p = {"m": res.pair.positive.m, "k": res.pair.positive.k, "x_thr": res.pair.nl.x_thr,
         "x_sat": res.pair.nl.x_sat, "best_iteration": res.trace.best_iteration,
         "accepted": res.trace.accepted_count, "escapes": res.trace.escape_count}
    p.update(params or {})
    return RunRecord(digest, trial.seed, config.task, "der", p, res.train_mae, res.test_mae,
                     res.pattern_test_mae, name, res.seconds), name


def _ppr_record(config, digest, trial, res: PprResult, label="ppr", params=None) -> tuple[RunRecord, str]:
    name = _trace_name(digest, trial.seed, label)
    p = {"n": res.bank.n, "variant": res.variant, "squash": res.squash,
         "best_epoch": int(np.argmin(res.trace))}
    p.update(params or {})
    return RunRecord(digest, trial.seed, config.task, "ppr", p, res.train_mae, res.test_mae,
                     res.pattern_test_mae, name, res.seconds), name


def run_trial(config: ExperimentConfig, seed: int) -> TrialOutcome:
    digest = config.digest()
    trial = prepare_trial(config, seed)
    out = TrialOutcome([])
    if "der" in config.readouts:
        res = train_der(config, trial)
        rec, name = _der_record(config, digest, trial, res)
        out.records.append(rec)
        out.traces[name] = res.trace
    if "ppr" in config.readouts:
        res = train_ppr(config, trial)
        rec, name = _ppr_record(config, digest, trial, res)
        out.records.append(rec)
        out.traces[name] = res.trace
    return out


def map_trials(fn: Callable, config: ExperimentConfig, seeds: Sequence[int] | None = None):
    """Apply ``fn(config, seed)`` to every trial, in parallel when ``config.workers > 1``.

    Results come back in seed order, so callers write them through a single
    appender regardless of the worker count.
    """
    seeds = list(config.trials if seeds is None else seeds)
    if config.workers == 1 or len(seeds) == 1:
        return [fn(config, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, [config] * len(seeds), seeds))


def _collect(outcomes: Iterable[TrialOutcome], writer: RecordWriter | None) -> list[RunRecord]:
    from .io import dumps_trace

    records = []
    for oc in outcomes:
        for rec in oc.records:
            if writer is not None:
                if rec.trace in oc.traces:
                    writer.write_text(rec.trace, dumps_trace(oc.traces[rec.trace]))
                writer.write(rec)
            records.append(rec)
    return records


def run_experiment(config: ExperimentConfig, writer: RecordWriter | None = None) -> list[RunRecord]:
    """Train the configured readouts on every trial seed; one record per (seed, readout)."""
    config.validate()
    return _collect(map_trials(run_trial, config), writer)


def mean_mae(records: Iterable[RunRecord], readout: str, phase: str = "test", **params) -> float:
    """Mean train or test MAE over matching records."""
    vals = [getattr(r, f"{phase}_mae") for r in records
            if r.readout == readout and all(r.params.get(k) == v for k, v in params.items())]
    if not vals:
        raise ValueError(f"no {readout} records match {params}")
    return float(np.mean(vals))


# convergence ------------------------------------------------------------------

@dataclass(frozen=True)
class Markers:
    n0: int
    n1: int | None
    n2: int


def _hold(trace: Sequence[float], length: int) -> np.ndarray:
    a = np.asarray(trace, dtype=float)
    return np.concatenate([a, np.full(length - a.size, a[-1])]) if a.size < length else a


def convergence_markers(trace_der: Sequence[float], trace_ppr: Sequence[float],
                        window: int = 50, tol: float = 1e-4) -> Markers:
    """1-based iteration markers of two error curves.

    ``n0``: first iteration after which the PPR error improves by less than
    ``tol`` within the next ``window`` iterations. ``n1``: first iteration
    where the DER error is at or below the PPR error (``None`` if never),
    comparing curves of unequal length by holding the shorter one's last
    value. ``n2``: first iteration of the DER minimum.
    """
    der = np.asarray(trace_der, dtype=float)
    ppr = np.asarray(trace_ppr, dtype=float)
    if der.size == 0 or ppr.size == 0:
        raise ValueError("traces must be non-empty")
    n0 = ppr.size
    for i in range(ppr.size):
        ahead = ppr[i + 1:i + 1 + window]
        if ahead.size == 0 or ppr[i] - ahead.min() < tol:
            n0 = i + 1
            break
    L = max(der.size, ppr.size)
    hit = np.flatnonzero(_hold(der, L) <= _hold(ppr, L))
    n1 = int(hit[0]) + 1 if hit.size else None
    return Markers(n0, n1, int(np.argmin(der)) + 1)


def _markers_trial(config: ExperimentConfig, seed: int):
    trial = prepare_trial(config, seed)
    der = train_der(config, trial)
    ppr = train_ppr(config, trial)
    return seed, convergence_markers(der.trace.mae, ppr.trace[1:]), der, ppr


def markers(config: ExperimentConfig) -> list[tuple[int, Markers]]:
    config.validate()
    return [(seed, mk) for seed, mk, _, _ in map_trials(_markers_trial, config)]


# sweeps -----------------------------------------------------------------------

def _sweep_ppr_trial(config, seed, n_values):
    digest, trial = config.digest(), prepare_trial(config, seed)
    oc = TrialOutcome([])
    res = train_der(config, trial)
    rec, name = _der_record(config, digest, trial, res, params={"sweep": "reference"})
    oc.records.append(rec)
    oc.traces[name] = res.trace
    for n in n_values:
        pres = train_ppr(config, trial, n=n)
        rec, name = _ppr_record(config, digest, trial, pres, label=f"ppr_n{n}")
        oc.records.append(rec)
        oc.traces[name] = pres.trace
    return oc


def sweep_ppr_n(config: ExperimentConfig, n_values: Sequence[int],
                writer: RecordWriter | None = None) -> list[RunRecord]:
    """PPR per ``n`` on every trial, plus one DER reference record per trial."""
    config.validate()
    if not n_values or min(n_values) < 1:
        raise ValueError("n_values must be positive")
    fn = _Partial(_sweep_ppr_trial, tuple(n_values))
    return _collect(map_trials(fn, config), writer)


def _sweep_xsat_trial(config, seed, values):
    digest, trial = config.digest(), prepare_trial(config, seed)
    oc = TrialOutcome([])
    for xs in values:
        res = train_der(config, trial, x_sat=xs)
        rec, name = _der_record(config, digest, trial, res, label=f"der_xsat{xs:g}")
        oc.records.append(rec)
        oc.traces[name] = res.trace
    return oc


def sweep_xsat(config: ExperimentConfig, xsat_values: Sequence[float],
               writer: RecordWriter | None = None) -> list[RunRecord]:
    """DER per saturation level (``inf`` is the pure square law)."""
    config.validate()
    if min(xsat_values) <= 0:
        raise ValueError("x_sat values must be positive")
    return _collect(map_trials(_Partial(_sweep_xsat_trial, tuple(xsat_values)), config), writer)


def dendrite_shapes(mode: str, values: Sequence[int], m: int, k: int) -> list[tuple[int, int]]:
    """(m, k) pairs for a fixed-``k`` or fixed-``s = m * k`` sweep."""
    if mode == "fixed_k":
        return [(v, k) for v in values]
    if mode == "fixed_s":
        s = m * k
        bad = [v for v in values if s % v]
        if bad:
            raise ValueError(f"m values {bad} do not divide s={s}")
        return [(v, s // v) for v in values]
    raise ValueError("mode must be 'fixed_k' or 'fixed_s'")


def _sweep_dendrites_trial(config, seed, shapes):
    digest, trial = config.digest(), prepare_trial(config, seed)
    d = trial.X_train.shape[1]
    oc = TrialOutcome([])
    for m, k in shapes:
        cfg = dataclasses.replace(config, trainer=dataclasses.replace(
            config.trainer, n_t=min(config.trainer.n_t, 2 * m * k)))
        res = train_der(cfg, trial, m=m, k=k)
        bits = bn_capacity(CellShape(m, k, d))
        rec, name = _der_record(config, digest, trial, res, label=f"der_m{m}_k{k}", params={"bits": bits})
        oc.records.append(rec)
        oc.traces[name] = res.trace
    return oc


def sweep_dendrites(config: ExperimentConfig, mode: str, values: Sequence[int],
                    writer: RecordWriter | None = None) -> list[RunRecord]:
    """DER per branch count, with the capacity of each shape in ``params['bits']``."""
    config.validate()
    shapes = dendrite_shapes(mode, values, config.der.m, config.der.k)
    return _collect(map_trials(_Partial(_sweep_dendrites_trial, tuple(shapes)), config), writer)


class _Partial:
    """Picklable ``fn(config, seed, *extra)`` for process pools."""

    def __init__(self, fn, *extra):
        self.fn, self.extra = fn, extra

    def __call__(self, config, seed):
        return self.fn(config, seed, *self.extra)


def sweep_table(records: Sequence[RunRecord], key: str) -> list[tuple]:
    """Rows ``(readout, value, mean test MAE, std, trials)`` grouped by ``params[key]``."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.readout, r.params.get(key, r.params.get("sweep", ""))), []).append(r.test_mae)
    return [(ro, val, float(np.mean(v)), float(np.std(v)), len(v)) for (ro, val), v in groups.items()]


# robustness -------------------------------------------------------------------

ROBUST_MODES = ("tau", "i0", "cni", "all")


def _robust_outputs(config, readout, trial, draw, ppr_res=None):
    kw = {}
    if ppr_res is not None:
        kw = dict(squash_kind=ppr_res.squash, variant=ppr_res.variant, nl=ppr_res.nl)
    y = evaluate_with_variation(readout, trial.liquid_test, config.kernel, config.sample_period, draw, **kw)
    if ppr_res is not None and ppr_res.squash == "clipped":
        y = (y + 1.0) / 2.0
    return y


def robustness_rows(config: ExperimentConfig, trial: TrialData, der: DerResult,
                    modes: Sequence[str] = ROBUST_MODES, per_branch: bool = False) -> list[tuple]:
    """Rows ``(mode, readout, seed, mae)`` for a trained DER and its matched PPR.

    The PPR (``n = 2m``, square variant, same nonlinearity) is trained here;
    variation draws come from the trial's own stream.
    """
    seed = trial.seed
    ppr = train_ppr(config, trial, n=2 * der.pair.positive.m, variant="square", nl=der.pair.nl)
    var_rng = trial_streams(seed)["variation"]
    readouts = (("der", der.pair, None), ("ppr", ppr.bank, ppr))
    rows = []
    for label, readout, pres in readouts:
        ident = VariationDraw.identity(*_topology(readout))
        rows.append(("none", label, seed, mae(trial.t_test, _robust_outputs(config, readout, trial, ident, pres))))
    for mode in modes:
        spec = VariationSpec.worst_case(seed, mode, per_branch)
        for label, readout, pres in readouts:
            draw = draw_for(readout, spec, var_rng)
            rows.append((mode, label, seed, mae(trial.t_test, _robust_outputs(config, readout, trial, draw, pres))))
    return rows


def _robustness_trial(config, seed, modes, per_branch):
    trial = prepare_trial(config, seed)
    return robustness_rows(config, trial, train_der(config, trial), modes, per_branch)


def _topology(readout) -> tuple[int, int]:
    if isinstance(readout, ReadoutPair):
        return 2 * readout.positive.m, readout.positive.k
    return readout.n, readout.d


def robustness(config: ExperimentConfig, modes: Sequence[str] = ROBUST_MODES,
               per_branch: bool = False) -> list[tuple[str, str, int, float]]:
    """Test MAE of a DER and a matched PPR (``n = 2m``, square variant) under mismatch.

    Returns rows ``(mode, readout, seed, mae)``; mode ``none`` is the
    unperturbed reference evaluated through the same per-synapse path.
    """
    config.validate()
    bad = set(modes) - set(ROBUST_MODES)
    if bad:
        raise ValueError(f"unknown variation modes {sorted(bad)}")
    out = map_trials(_Partial(_robustness_trial, tuple(modes), per_branch), config)
    return [row for rows in out for row in rows]


def robustness_deltas(rows, mode: str = "all") -> dict[str, float]:
    """Mean over seeds of ``mae(mode) - mae(none)`` per readout."""
    base = {(r, s): v for m, r, s, v in rows if m == "none"}
    deltas: dict[str, list[float]] = {}
    for m, r, s, v in rows:
        if m == mode:
            deltas.setdefault(r, []).append(v - base[(r, s)])
    return {r: float(np.mean(v)) for r, v in deltas.items()}
