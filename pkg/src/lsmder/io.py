"""Plain-text persistence for spike trains, states, readouts, traces and reports.

Every format is whitespace or comma delimited text with an optional
``key=value`` header so it can be read by any plotting tool.
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .capacity import SweepRow
from .der_readout import DendriticCell
from .nrw_trainer import TrainingTrace
from .ppr_readout import PerceptronBank
from .spike_core import SpikeTrain, StateMatrix


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def _float(x: float) -> str:
    return repr(float(x))


# spike trains -----------------------------------------------------------------

def dumps_spike_trains(trains: Sequence[SpikeTrain]) -> str:
    """Header ``duration=<s>`` then one line of spike times per train."""
    if not trains:
        raise ValueError("need at least one train")
    duration = trains[0].duration
    if any(t.duration != duration for t in trains):
        raise ValueError("all trains must share one duration")
    lines = [f"duration={_float(duration)}"]
    lines += [" ".join(_float(s) for s in t.times) for t in trains]
    return "\n".join(lines) + "\n"


def loads_spike_trains(text: str) -> list[SpikeTrain]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    key, _, value = lines[0].partition("=")
    if key.strip() != "duration":
        raise ValueError("first line must be duration=<seconds>")
    duration = float(value)
    return [SpikeTrain(np.array([float(v) for v in ln.split()]), duration) for ln in lines[1:]]


def save_spike_trains(path, trains) -> None:
    _write(path, dumps_spike_trains(trains))


def load_spike_trains(path) -> list[SpikeTrain]:
    return loads_spike_trains(Path(path).read_text())


# state matrix -----------------------------------------------------------------

def save_state_matrix(path, states: StateMatrix) -> None:
    """Comma-delimited, one row per sample, column ``c`` is channel ``c``."""
    buf = io.StringIO()
    buf.write(f"# sample_period={_float(states.sample_period)}\n")
    np.savetxt(buf, states.samples, delimiter=",", fmt="%.17g")
    _write(path, buf.getvalue())


def load_state_matrix(path) -> StateMatrix:
    text = Path(path).read_text()
    head = text.split("\n", 1)[0]
    period = float(head.lstrip("# ").split("=", 1)[1])
    samples = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)
    return StateMatrix(samples, period)


# readouts ---------------------------------------------------------------------

def dumps_wiring(cell: DendriticCell) -> str:
    """Header ``d=<lines>`` then one line of ``k`` afferent indices per branch."""
    lines = [f"d={cell.d}"] + [" ".join(str(int(a)) for a in row) for row in cell.wiring]
    return "\n".join(lines) + "\n"


def loads_wiring(text: str) -> DendriticCell:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    d = int(lines[0].split("=", 1)[1])
    wiring = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64)
    return DendriticCell(wiring, d)


def save_wiring(path, cell: DendriticCell) -> None:
    _write(path, dumps_wiring(cell))


def load_wiring(path) -> DendriticCell:
    return loads_wiring(Path(path).read_text())


def save_weights(path, bank: PerceptronBank) -> None:
    """Header ``n=<perceptrons> d=<inputs>`` then one weight row per perceptron (bias last)."""
    buf = io.StringIO()
    buf.write(f"# n={bank.n} d={bank.d}\n")
    np.savetxt(buf, bank.weights, delimiter=",", fmt="%.17g")
    _write(path, buf.getvalue())


def load_weights(path) -> PerceptronBank:
    text = Path(path).read_text()
    fields = dict(kv.split("=") for kv in text.split("\n", 1)[0].lstrip("# ").split())
    w = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)
    if w.shape != (int(fields["n"]), int(fields["d"]) + 1):
        raise ValueError("weight matrix shape does not match header")
    return PerceptronBank(w)


# traces and tables ------------------------------------------------------------

TRACE_HEADER = "iteration,mae,accepted,escaped"


def dumps_trace(trace: TrainingTrace | Sequence[float]) -> str:
    """Trace rows ``iteration,mae,accepted,escaped``; row 0 is the initial state.

    A plain sequence of errors (a p-delta epoch trace) is written with the
    flags set to 0.
    """
    rows = [TRACE_HEADER]
    if isinstance(trace, TrainingTrace):
        rows.append(f"0,{_float(trace.initial_mae)},0,0")
        for i, (e, a, x) in enumerate(zip(trace.mae, trace.accepted, trace.escaped), 1):
            rows.append(f"{i},{_float(e)},{int(a)},{int(x)}")
    else:
        rows += [f"{i},{_float(e)},0,0" for i, e in enumerate(trace)]
    return "\n".join(rows) + "\n"


def loads_trace(text: str) -> np.ndarray:
    """Structured array with fields iteration, mae, accepted, escaped."""
    return np.genfromtxt(io.StringIO(text), delimiter=",", names=True,
                         dtype=[("iteration", int), ("mae", float), ("accepted", int), ("escaped", int)],
                         ndmin=1)


def save_trace(path, trace) -> None:
    _write(path, dumps_trace(trace))


def dumps_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(out) + "\n"


def dumps_capacity(rows: Sequence[SweepRow]) -> str:
    return dumps_table(("m", "k", "bits"), ((r.m, r.k, r.bits) for r in rows))


ROBUSTNESS_HEADER = ("mode", "readout", "seed", "mae")


def dumps_robustness(rows: Iterable[tuple[str, str, int, float]]) -> str:
    return dumps_table(ROBUSTNESS_HEADER, rows)


__all__ = [
    "dumps_spike_trains", "loads_spike_trains", "save_spike_trains", "load_spike_trains",
    "save_state_matrix", "load_state_matrix", "dumps_wiring", "loads_wiring", "save_wiring",
    "load_wiring", "save_weights", "load_weights", "dumps_trace", "loads_trace", "save_trace",
    "dumps_table", "dumps_capacity", "dumps_robustness",
]
