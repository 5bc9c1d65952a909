"""Windowed sum of four modulated Poisson rates, one trial.

Run with ``python3 demos/task2_walkthrough.py [seed]``.

The approximation preset gives the liquid a spread of background currents,
so part of the pool fires tonically and the readout sees activity even
when the input rates are low.
"""
import sys

import numpy as np

from lsmder import bench
from lsmder.config import apply_overrides, task_defaults
from lsmder.der_readout import pair_output

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
config = task_defaults("sum_of_rates")
trial = bench.prepare_trial(config, seed)
S = trial.samples_per_pattern
print(f"{S} samples per pattern, x_thr = {trial.x_thr:g}, mean liquid rate {trial.mean_rate:.1f} Hz")

der = bench.train_der(config, trial)
print(f"DER        train {der.train_mae:.4f}  test {der.test_mae:.4f}")

signum = bench.train_der(config, trial, fitness="signum")
print(f"DER signum train {signum.train_mae:.4f}  test {signum.test_mae:.4f}   (error sign only in the fitness)")

sigmoid_config = apply_overrides(config, {"ppr.approx_squash": "sigmoid_half"})
for n in (1, 10, 40):
    for cfg in (config, sigmoid_config):
        ppr = bench.train_ppr(cfg, trial, n=n)
        print(f"PPR n={n:<3} {ppr.squash:<12}  train {ppr.train_mae:.4f}  test {ppr.test_mae:.4f}")

# first test pattern: target against DER output
y = pair_output(der.pair, trial.X_test[:S])
print("\n  t[s]  target   DER")
for i in range(0, S, 4):
    print(f"  {i * config.sample_period:4.2f}  {trial.t_test[i]:.3f}  {y[i]:.3f}")
print(f"\nmean |error| on that pattern: {np.mean(np.abs(y - trial.t_test[:S])):.4f}")
