"""Command line entry point: ``lsmder <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 failed ``verify`` check.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench, io
from .capacity import capacity_sweep
from .config import TASKS, ConfigError, ExperimentConfig, apply_overrides, dumps_config, load_config, task_defaults

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmder", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument("--task", choices=TASKS, help="benchmark task (selects its default preset)")
    common.add_argument("--seed", type=int, help="first trial seed")
    common.add_argument("--trials", type=int, help="number of consecutive trial seeds")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--workers", type=int, help="parallel trial processes")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="train the configured readouts on every trial")
    p = sub.add_parser("sweep-n", parents=[common], help="PPR error against number of perceptrons")
    p.add_argument("--values", type=_ints, default=[1, 10, 20, 30, 40, 50, 60])
    p = sub.add_parser("sweep-xsat", parents=[common], help="DER error against branch saturation")
    p.add_argument("--values", type=_floats, default=[1, 5, 10, 25, 50, 75, 150, float("inf")])
    p = sub.add_parser("sweep-dendrites", parents=[common], help="DER error against branch count")
    p.add_argument("--mode", choices=("fixed_k", "fixed_s"), default="fixed_k")
    p.add_argument("--values", type=_ints, default=None,
                   help="branch counts (default 1..10 for fixed_k, divisors of s for fixed_s)")
    p = sub.add_parser("capacity", parents=[common], help="capacity of every m*k=s factorisation")
    p.add_argument("--s", type=int, default=70)
    p.add_argument("--d", type=int, default=None, help="input lines (default: liquid size)")
    p = sub.add_parser("robustness", parents=[common], help="DER vs matched PPR under mismatch")
    p.add_argument("--modes", default="tau,i0,cni,all")
    p.add_argument("--per-branch", action="store_true", help="share synapse mismatch within a branch")
    sub.add_parser("markers", parents=[common], help="convergence markers n0, n1, n2 per trial")
    sub.add_parser("verify", parents=[common], help="run the fast self-checks")
    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return parser


def resolve_config(args) -> ExperimentConfig:
    config = task_defaults(args.task or "spike_classification")
    if args.config is not None:
        config = load_config(args.config, config)
        if args.task and config.task != args.task:
            raise ConfigError(f"--task {args.task} conflicts with config task {config.task}")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    config = apply_overrides(config, overrides)
    if args.seed is not None or args.trials is not None:
        first = args.seed if args.seed is not None else 0
        count = args.trials if args.trials is not None else 1
        if count < 1:
            raise ConfigError("--trials must be >= 1")
        config = apply_overrides(config, {"trials": ",".join(str(first + i) for i in range(count))})
    if args.workers is not None:
        config = apply_overrides(config, {"workers": str(args.workers)})
    return config.validate()


def _summary(records, key=None) -> str:
    lines = []
    for readout in ("der", "ppr"):
        rows = [r for r in records if r.readout == readout]
        if rows:
            tr = np.mean([r.train_mae for r in rows])
            te = np.mean([r.test_mae for r in rows])
            lines.append(f"{readout}: mean train MAE {tr:.4f}, mean test MAE {te:.4f} over {len(rows)} records")
    return "\n".join(lines)


def _table(records, key) -> str:
    return io.dumps_table(("readout", key, "mean_test_mae", "std_test_mae", "trials"),
                          bench.sweep_table(records, key))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "show-config":
        print(dumps_config(config), end="")
        return EXIT_OK
    if args.command == "verify":
        from .checks import run_checks

        results = run_checks()
        for res in results:
            print(res.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
    if args.command == "capacity":
        d = args.d or config.liquid.num_neurons
        try:
            rows = capacity_sweep(args.s, d)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        text = io.dumps_capacity(rows)
        writer = bench.RecordWriter(args.out)
        writer.write_text("capacity.csv", text)
        print(text, end="")
        return EXIT_OK

    writer = bench.RecordWriter(args.out)
    writer.write_text("config.txt", dumps_config(config))
    try:
        if args.command == "run":
            records = bench.run_experiment(config, writer)
            print(_summary(records))
        elif args.command == "sweep-n":
            records = bench.sweep_ppr_n(config, args.values, writer)
            print(writer.write_text("sweep_n.csv", _table(records, "n")).read_text(), end="")
        elif args.command == "sweep-xsat":
            records = bench.sweep_xsat(config, args.values, writer)
            print(writer.write_text("sweep_xsat.csv", _table(records, "x_sat")).read_text(), end="")
        elif args.command == "sweep-dendrites":
            values = args.values
            if values is None:
                s = config.der.m * config.der.k
                values = list(range(1, 11)) if args.mode == "fixed_k" else [m for m in range(1, s + 1) if s % m == 0]
            records = bench.sweep_dendrites(config, args.mode, values, writer)
            rows = [(r.params["m"], r.params["k"], r.params["bits"], r.seed, r.train_mae, r.test_mae)
                    for r in records]
            text = io.dumps_table(("m", "k", "bits", "seed", "train_mae", "test_mae"), rows)
            print(writer.write_text(f"sweep_dendrites_{args.mode}.csv", text).read_text(), end="")
        elif args.command == "robustness":
            modes = [m for m in args.modes.split(",") if m]
            rows = bench.robustness(config, modes, per_branch=args.per_branch)
            writer.write_text("robustness.csv", io.dumps_robustness(rows))
            for mode in modes:
                deltas = bench.robustness_deltas(rows, mode)
                print(f"{mode}: " + ", ".join(f"delta {r} {v:+.4f}" for r, v in sorted(deltas.items())))
        elif args.command == "markers":
            rows = [(seed, mk.n0, "" if mk.n1 is None else mk.n1, mk.n2) for seed, mk in bench.markers(config)]
            print(writer.write_text("markers.csv", io.dumps_table(("seed", "n0", "n1", "n2"), rows)).read_text(),
                  end="")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
