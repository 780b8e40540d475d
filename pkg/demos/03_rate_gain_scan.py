#!/usr/bin/env python3
"""Trainability of the tuning loop across the rate/gain plane.

For each (eta, sigma_w) pair, a depth-10 ReLU stack is tuned for several
hundred steps with the log loss; a point counts as trainable when every
block norm settles into 0.8 < J < 1.25. The stability analysis predicts
the boundary: rates below roughly 1/sigma_w^2 contract monotonically,
while the t=0 estimate eta_0 overestimates the trainable region when the
norms start above 1 - the gap is visible in the printed map.

Run:  python3 demos/03_rate_gain_scan.py   (about a minute)
"""

import numpy as np

from crittuner import (
    DivergenceError,
    RngStream,
    TuneConfig,
    eta_zero,
    gaussian_batch,
    init_params,
    relu_dynamics,
    tune,
)
from crittuner.presets import relu_mlp

WIDTH, DEPTH, BATCH, STEPS = 300, 10, 4, 400
BAND = (0.8, 1.25)
SIGMAS = (1.8, 2.2, 2.6, 3.0)
ETA_FRACTIONS = (0.3, 0.6, 0.9, 1.2, 1.5)   # in units of 1/sigma_w^2


def classify(js_tail):
    if not np.all(np.isfinite(js_tail)):
        return False
    means = js_tail.mean(axis=0)
    return bool(np.all((means > BAND[0]) & (means < BAND[1])))


print(f"{'':>10}" + "".join(f"{f:>9}" for f in ETA_FRACTIONS) + "   (eta * sigma_w^2)")
for sw in SIGMAS:
    spec = relu_mlp(DEPTH, WIDTH, sw)
    rng = RngStream(3)
    x = gaussian_batch(spec.input_shape, BATCH, rng.child(1))
    params = init_params(spec, rng.child(2))
    row = []
    for frac in ETA_FRACTIONS:
        eta = frac / sw ** 2
        cfg = TuneConfig(loss="jll", eta=eta, t_max=STEPS, n_v=4,
                         grad_mode="analytic-relu")
        try:
            res = tune(spec, params, x, cfg, rng.child(5))
            ok = classify(res.trace.js_matrix[-10:])
        except DivergenceError:
            ok = False
        # prediction from the exact map, started at the wide-network norm
        pred = relu_dynamics(np.full(DEPTH, sw ** 2 / 2), sw, eta, STEPS, "jll")
        pred_ok = (np.all(np.isfinite(pred.values[-10:]))
                   and np.all(np.abs(pred.values[-10:].mean(axis=0) - 1) < 0.25))
        row.append(("#" if ok else ".") + ("+" if pred_ok else "-"))
    e0 = eta_zero(1.0, sw, "jll") * sw ** 2
    print(f"sigma_w={sw:3.1f}" + "".join(f"{c:>9}" for c in row)
          + f"   eta_0 * sigma_w^2 = {e0:.2f}")
print("\n'#' tuned into the band / '.' not; '+' predicted stable / '-' not.")
