"""Spike-template classification, one trial, DER against a single perceptron.

Run with ``python3 demos/task1_walkthrough.py [seed]``. Takes a minute or
two on one core: most of it is the liquid simulation and 1000 rewiring
iterations.
"""
import sys

import numpy as np

from lsmder import bench
from lsmder.config import task_defaults
from lsmder.der_readout import pair_output
from lsmder.io import dumps_wiring

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
config = task_defaults("spike_classification")

# one trial: two jittered templates through a 140-neuron liquid, sampled every 25 ms
trial = bench.prepare_trial(config, seed)
print(f"states: train {trial.X_train.shape}, test {trial.X_test.shape}")
print(f"mean liquid rate {trial.mean_rate:.1f} Hz, branch threshold x_thr = {trial.x_thr:.3f}")

der = bench.train_der(config, trial)
print(f"DER  (7 branches x 10 synapses per cell): train {der.train_mae:.4f}  test {der.test_mae:.4f}  "
      f"pattern error {der.pattern_test_mae:.3f}")
print(f"     best wiring at iteration {der.trace.best_iteration}, "
      f"{der.trace.accepted_count} accepted swaps, {der.trace.escape_count} escapes")

ppr = bench.train_ppr(config, trial, n=1)
print(f"PPR  (1 perceptron, 141 analog weights):  train {ppr.train_mae:.4f}  test {ppr.test_mae:.4f}  "
      f"pattern error {ppr.pattern_test_mae:.3f}")

# the whole trained DER fits in 140 small integers per cell
print("\npositive cell wiring:")
print(dumps_wiring(der.pair.positive), end="")

# where in the pattern do the errors sit?
per_sample = np.abs(trial.t_test - pair_output(der.pair, trial.X_test))
by_time = per_sample.reshape(-1, trial.samples_per_pattern).mean(axis=0)
print("\nDER test error by sample index:", " ".join(f"{v:.2f}" for v in by_time))
