#!/usr/bin/env python3
"""Where does a plain ReLU stack sit relative to criticality?

Measures the block-to-block Jacobian norms of a depth-10, width-500 ReLU
network for several weight gains and compares them with the wide-network
value sigma_w^2 / 2. The gain sqrt(2) is the critical point: every norm
lands at 1 and signals neither explode nor die.

Run:  python3 demos/01_criticality_line.py
"""

import math

import numpy as np

from crittuner import AuxScalars, RngStream, apjn_profile, gaussian_batch, init_params
from crittuner.presets import relu_mlp

WIDTH, DEPTH, BATCH, SAMPLES = 500, 10, 4, 20

print(f"ReLU stack, width {WIDTH}, depth {DEPTH}, {SAMPLES} parameter draws")
print(f"{'sigma_w':>9} {'predicted':>10} {'measured (mean over layers)':>29} {'max dev':>8}")
for sigma_w in (1.0, math.sqrt(2.0), 2.0, 3.0):
    spec = relu_mlp(DEPTH, WIDTH, sigma_w)
    rng = RngStream(42)
    x = gaussian_batch(spec.input_shape, BATCH, rng.child(1))
    params = init_params(spec, rng.child(2))
    report = apjn_profile(spec, params, AuxScalars.ones(spec), x, 1,
                          method="exact", n_param_samples=SAMPLES, rng=rng.child(3))
    js = report.values()
    pred = sigma_w ** 2 / 2.0
    print(f"{sigma_w:9.4f} {pred:10.4f} {js.mean():29.4f} "
          f"{np.abs(js / pred - 1).max():8.2%}")

print("\nPer-layer profile at the critical gain:")
spec = relu_mlp(DEPTH, WIDTH, math.sqrt(2.0))
rng = RngStream(7)
x = gaussian_batch(spec.input_shape, BATCH, rng.child(1))
params = init_params(spec, rng.child(2))
report = apjn_profile(spec, params, AuxScalars.ones(spec), x, 1,
                      method="exact", n_param_samples=SAMPLES, rng=rng.child(3))
for p in report.pairs:
    print(f"  J({p.l0},{p.l}) = {p.value:.4f}")
