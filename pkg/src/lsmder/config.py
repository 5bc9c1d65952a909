"""Experiment configuration and its flat ``key=value`` text format.

A config file holds one ``dotted.key = value`` assignment per line; ``#``
starts a comment. Keys mirror the attribute path inside
:class:`ExperimentConfig`, for example::

    task = sum_of_rates
    trials = 0,1,2
    liquid.num_neurons = 140
    liquid.lif_exc.membrane_tau = 0.03
    liquid.synapses.EE.weight = 12
    kernel.tau_decay = 0.03
    der.x_thr = auto
    der.x_sat = inf
    ppr.n = 40
    ppr.pdelta.gamma = 0.05
    trainer.max_iter = 1000
    task2.duration = 1.0

Values are parsed according to the type of the default they replace.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .liquid import LiquidConfig
from .nrw_trainer import TrainerConfig
from .ppr_readout import PDeltaParams
from .spike_core import KernelParams
from .tasks import TaskOneParams, TaskTwoParams

TASKS = ("spike_classification", "sum_of_rates")
READOUTS = ("der", "ppr")


class ConfigError(ValueError):
    """Invalid configuration key or value."""


@dataclass(frozen=True)
class DerSettings:
    m: int = 7
    k: int = 10
    x_thr: float | str = "auto"
    x_thr_fraction: float = 1.5
    x_sat: float = 75.0


@dataclass(frozen=True)
class PprSettings:
    n: int = 1
    epochs: int = 200
    variant: str = "sign"
    pdelta: PDeltaParams = field(default_factory=PDeltaParams)
    epsilon_approx: float = 0.05
    approx_squash: str = "clipped"


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "spike_classification"
    liquid: LiquidConfig = field(default_factory=LiquidConfig)
    kernel: KernelParams = field(default_factory=KernelParams)
    sample_period: float = 0.025
    dt: float = 0.0002
    der: DerSettings = field(default_factory=DerSettings)
    ppr: PprSettings = field(default_factory=PprSettings)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    p_patterns: int = 200
    task1: TaskOneParams = field(default_factory=TaskOneParams)
    task2: TaskTwoParams = field(default_factory=TaskTwoParams)
    trials: tuple[int, ...] = tuple(range(10))
    readouts: tuple[str, ...] = READOUTS
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`ConfigError` on any inconsistency, else return self."""
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.trials:
            raise ConfigError("trials must name at least one seed")
        if len(set(self.trials)) != len(self.trials):
            raise ConfigError("trial seeds must be distinct")
        if not set(self.readouts) <= set(READOUTS) or not self.readouts:
            raise ConfigError(f"readouts must be a non-empty subset of {READOUTS}")
        if self.sample_period <= 0 or self.dt <= 0:
            raise ConfigError("sample_period and dt must be positive")
        if self.p_patterns < self.task1.q:
            raise ConfigError("p_patterns must be at least the number of classes")
        if self.der.m < 1 or self.der.k < 1:
            raise ConfigError("der.m and der.k must be >= 1")
        if self.der.x_thr != "auto" and not (isinstance(self.der.x_thr, (int, float)) and self.der.x_thr > 0):
            raise ConfigError("der.x_thr must be 'auto' or a positive number")
        if not self.der.x_sat > 0:
            raise ConfigError("der.x_sat must be positive (inf allowed)")
        if self.ppr.n < 1 or self.ppr.epochs < 0:
            raise ConfigError("ppr.n must be >= 1 and ppr.epochs >= 0")
        if self.ppr.variant not in ("sign", "square"):
            raise ConfigError("ppr.variant must be 'sign' or 'square'")
        if self.ppr.approx_squash not in ("clipped", "sigmoid_half"):
            raise ConfigError("ppr.approx_squash must be 'clipped' or 'sigmoid_half'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.trainer.validate(self.der.m, self.der.k, self.liquid.num_neurons)
        except ValueError as exc:
            raise ConfigError(f"trainer: {exc}") from exc
        return self

    def digest(self) -> str:
        """sha256 over every field except the trial list and worker count."""
        body = dataclasses.asdict(dataclasses.replace(self, trials=(), workers=1))
        text = json.dumps(body, sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


def _parse_scalar(text: str, current):
    text = text.strip()
    if isinstance(current, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(current, int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"expected an integer, got {text!r}") from None
    if isinstance(current, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}") from None
    if isinstance(current, tuple):
        items = [s for s in text.replace(" ", "").split(",") if s]
        proto = current[0] if current else 0
        if isinstance(proto, tuple):
            raise ConfigError("nested tuple values cannot be set from text")
        return tuple(_parse_scalar(s, proto) for s in items)
    # str or None: numbers stay numbers, anything else is a string
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return None if text.lower() == "none" else text


# fields whose text may be a number or a keyword
_LOOSE = {"x_thr": None, "i0": None}


def _set(obj, path: list[str], raw: str, full_key: str):
    head, rest = path[0], path[1:]
    if isinstance(obj, dict):
        if head not in obj:
            raise ConfigError(f"unknown key {full_key!r}")
        new = dict(obj)
        new[head] = _set(obj[head], rest, raw, full_key) if rest else _parse_scalar(raw, obj[head])
        return new
    if not dataclasses.is_dataclass(obj) or head not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown key {full_key!r}")
    cur = getattr(obj, head)
    if rest:
        value = _set(cur, rest, raw, full_key)
    else:
        value = _parse_scalar(raw, _LOOSE.get(head, cur))
    try:
        if isinstance(obj, KernelParams) and head != "i0":
            # the peak normaliser follows the time constants
            return dataclasses.replace(obj, **{head: value, "i0": None})
        return dataclasses.replace(obj, **{head: value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{full_key}: {exc}") from exc


def apply_overrides(config: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    """Return a copy of ``config`` with dotted-key string overrides applied."""
    for key, raw in pairs.items():
        config = _set(config, key.strip().split("."), raw, key)
    return config


def parse_assignments(lines) -> dict[str, str]:
    out = {}
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {num}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return apply_overrides(base or ExperimentConfig(), parse_assignments(text.splitlines()))


def dumps_config(config: ExperimentConfig) -> str:
    """Every leaf of ``config`` as ``key = value``; round-trips through :func:`load_config`."""
    lines = []

    def walk(prefix, obj):
        if dataclasses.is_dataclass(obj):
            for f in dataclasses.fields(obj):
                walk(f"{prefix}{f.name}.", getattr(obj, f.name))
        elif isinstance(obj, dict):
            for key in obj:
                walk(f"{prefix}{key}.", obj[key])
        else:
            key = prefix[:-1]
            if isinstance(obj, tuple):
                if obj and isinstance(obj[0], tuple):
                    return
                value = ",".join(str(v) for v in obj)
            elif isinstance(obj, float):
                value = "inf" if math.isinf(obj) else repr(obj)
            else:
                value = str(obj)
            lines.append(f"{key} = {value}")

    walk("", config)
    return "\n".join(lines) + "\n"


def task_defaults(task: str = "spike_classification") -> ExperimentConfig:
    """Default configuration for a task.

    The approximation task gets a tonically active liquid (a spread of
    background currents above threshold) and a wide branch threshold: the
    DER has no bias term and its sigmoid sits at 0.5 for zero drive, so it
    needs ongoing activity and a graded drive range to output low targets.
    """
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    base = ExperimentConfig(task=task)
    if task == "sum_of_rates":
        base = dataclasses.replace(
            base, liquid=dataclasses.replace(base.liquid, background_spread=9.0),
            der=dataclasses.replace(base.der, x_thr=80.0))
    return base
