"""Counting capacity of branch layouts, then one mismatch experiment.

Run with ``python3 demos/capacity_and_mismatch.py``.
"""
from lsmder import bench
from lsmder.capacity import capacity_sweep
from lsmder.config import task_defaults

# 70 synapses per cell over 140 liquid lines: which split into m x k holds most wirings?
rows = capacity_sweep(70, 140)
top = max(r.bits for r in rows)
for r in rows:
    bar = "#" * int(40 * r.bits / top)
    print(f"m={r.m:<3} k={r.k:<3} {r.bits:8.1f} bits  {bar}")

# a trained DER and a 14-perceptron square-law PPR under worst-case circuit spreads
config = task_defaults("spike_classification")
trial = bench.prepare_trial(config, 0)
der = bench.train_der(config, trial)
rows = bench.robustness_rows(config, trial, der)
print("\nmode   readout  test MAE")
for mode, readout, _, err in rows:
    print(f"{mode:<6} {readout:<8} {err:.4f}")
for mode in bench.ROBUST_MODES:
    d = bench.robustness_deltas(rows, mode)
    print(f"{mode:<4} increase: DER {d['der']:+.4f}  PPR {d['ppr']:+.4f}")
