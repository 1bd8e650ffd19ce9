"""
Averaging over neighbouring thresholds
======================================

A single threshold gives a noisy tail. Averaging the cumulative hazards of
several thresholds, with equal weights or weights from the penalized
profile, smooths it.
"""

import numpy as np

from coxtail import SelectionParams, aggregate_adaptive, aggregate_simple, fit_cox, select_threshold
from coxtail.simulation import law_survival, simcauch1_config, simulate_cox_sample

cfg = simcauch1_config(n=500, seed=4)
sample = simulate_cox_sample(cfg, 0)
cox = fit_cox(sample)

simple = aggregate_simple(sample, cox.beta, m0_frac=0.06, M=10, cox=cox)
sel = select_threshold(sample, cox.beta, SelectionParams(D=9.5), cox=cox)
adaptive = aggregate_adaptive(sample, cox.beta, sel, M=10, cox=cox)

print("simple thresholds:  ", np.round(simple.taus, 3))
print("adaptive thresholds:", np.round(adaptive.taus, 3))
print("adaptive weights:   ", np.round(adaptive.weights, 3))

x = np.geomspace(10, 1000, 5)
print("     x    true  simple  adaptive")
for xi, t, s, a in zip(x, law_survival(cfg.failure, x), simple.survival(x), adaptive.survival(x)):
    print(f"{xi:6.0f}  {t:.4f}  {s:.4f}  {a:.4f}")
