import math

import numpy as np
import pytest

from crittuner.apjn import exact_apjn
from crittuner.blocks import AuxScalars, forward, init_params, run_network, vjp_params
from crittuner.presets import linear_mlp, relu_mlp
from crittuner.tensor import RngStream
from crittuner.tuner import (
    DivergenceError,
    TuneConfig,
    eta_bound,
    eta_one_step,
    eta_zero,
    grad_aux,
    tune,
)

SQRT2 = math.sqrt(2.0)


def _setup(spec, seed, batch):
    rng = RngStream(seed)
    x = rng.child(1).normal((batch, *spec.input_shape))
    params = init_params(spec, rng.child(2))
    return x, params, rng


# -- closed-form rates ---------------------------------------------------------

def test_eta_bound_values():
    assert eta_bound([2.0], 2.0, loss="jll") == pytest.approx(0.4226, abs=2e-4)
    assert eta_bound([2.0], 2.0, loss="jsl") == pytest.approx(0.1464, abs=2e-4)
    assert eta_bound([1.0], 2.0, loss="jll") == pytest.approx(0.25, rel=1e-9)
    with pytest.raises(ValueError):
        eta_bound([0.0], 1.0)


def test_eta_bound_is_min_over_layers():
    b2 = eta_bound([2.0], 1.5, loss="jll")
    b4 = eta_bound([4.0], 1.5, loss="jll")
    assert eta_bound([2.0, 4.0], 1.5, loss="jll") == pytest.approx(min(b2, b4))


def test_eta_one_step_values():
    assert eta_one_step(2.0, 2.0, "jll") == pytest.approx(0.2113, abs=1e-4)
    assert eta_one_step(2.0, 2.0, "jsl") == pytest.approx(0.0732, abs=1e-4)
    assert eta_one_step(1.0, 2.0, "jll") == pytest.approx(1.0 / 8.0)


def test_eta_zero_values_and_consistency():
    assert eta_zero(1.0, 2.0, "jll") == pytest.approx(0.4226, abs=1e-4)
    assert eta_zero(1.0, 2.0, "jsl") == pytest.approx(4.0 / (8.0 * (SQRT2 + 2.0)), rel=1e-12)
    # matches the stability bound evaluated at J(0) = (a sigma_w)^2 / 2
    assert eta_zero(1.0, 2.0, "jll") == pytest.approx(eta_bound([2.0], 2.0, loss="jll"))
    with pytest.raises(ValueError):
        eta_zero(1.0, SQRT2, "jll")


def test_eta_zero_scaling_regimes():
    r = eta_zero(1.0, 8.0, "jsl") / eta_zero(1.0, 4.0, "jsl")
    assert abs(r / 2.0 ** -4 - 1.0) < 0.2
    r = eta_zero(1.0, 8.0, "jll") / eta_zero(1.0, 64.0, "jll")
    assert abs(r / (math.log(64.0) / math.log(8.0)) - 1.0) < 0.2


# -- gradients -----------------------------------------------------------------

def test_analytic_gradient_formula_and_fd_agreement():
    spec = relu_mlp(4, 80, 2.0)
    x, params, rng = _setup(spec, 3, 8)
    aux = AuxScalars.ones(spec, groups={"W"})
    cfg_fd = TuneConfig(loss="jll", eta=0.1, n_v=4)
    cfg_an = TuneConfig(loss="jll", eta=0.1, n_v=4, grad_mode="analytic-relu")
    g_fd = grad_aux(spec, params, aux, x, cfg_fd, rng.child(7))
    g_an = grad_aux(spec, params, aux, x, cfg_an, rng.child(7))
    assert set(g_fd) == set(g_an)
    for key, ga in g_an.items():
        assert g_fd[key] == pytest.approx(ga, rel=1e-3), key


def test_bias_scalars_receive_no_analytic_update():
    spec = relu_mlp(3, 40, 2.0, 0.5)
    x, params, rng = _setup(spec, 4, 6)
    aux = AuxScalars.ones(spec)
    cfg = TuneConfig(loss="jll", eta=0.1, n_v=2, grad_mode="analytic-relu")
    grads = grad_aux(spec, params, aux, x, cfg, rng.child(5))
    assert all(v == 0.0 for (i, g), v in grads.items() if g == "b")


def test_gradient_near_zero_at_criticality():
    # at criticality the gradient is set by finite-width norm scatter only;
    # well off criticality it is an order of magnitude larger
    x = None
    spec = relu_mlp(4, 300, SQRT2)
    x, params, rng = _setup(spec, 5, 8)
    aux = AuxScalars.ones(spec, groups={"W"})
    cfg = TuneConfig(loss="jll", eta=0.1, n_v=0)
    grads = grad_aux(spec, params, aux, x, cfg, rng.child(6))
    at_crit = max(abs(v) for v in grads.values())
    spec2 = relu_mlp(4, 300, 2.0)
    params2 = init_params(spec2, RngStream(5).child(2))
    grads2 = grad_aux(spec2, params2, aux, x, cfg, rng.child(6))
    off_crit = max(abs(v) for v in grads2.values())
    assert at_crit < 0.35
    assert off_crit > 1.0


def test_jsl_analytic_gradient():
    spec = relu_mlp(2, 60, 2.0)
    x, params, rng = _setup(spec, 6, 4)
    aux = AuxScalars.ones(spec, groups={"W"})
    cfg = TuneConfig(loss="jsl", eta=0.1, n_v=0, grad_mode="analytic-relu")
    grads = grad_aux(spec, params, aux, x, cfg, rng.child(2))
    state = run_network(spec, params, aux, x)
    j0 = exact_apjn(spec, params, aux, x, 0, 1, state=state)
    assert grads[(0, "W")] == pytest.approx(2.0 * j0 * (j0 - 1.0), rel=1e-10)


# -- the loop ------------------------------------------------------------------

def test_one_step_schedule_reaches_band():
    spec = relu_mlp(6, 300, 2.0)
    x, params, rng = _setup(spec, 7, 16)
    cfg = TuneConfig(loss="jll", schedule="one-step", t_max=1, n_v=0,
                     grad_mode="analytic-relu")
    res = tune(spec, params, x, cfg, rng.child(3))
    assert np.all(np.abs(res.trace.steps[-1].js - 1.0) < 0.05)


def test_critical_net_exits_immediately():
    spec = relu_mlp(3, 100, SQRT2)
    x, params, rng = _setup(spec, 8, 8)
    # epsilon above the resting loss of a near-critical instance
    cfg = TuneConfig(loss="jll", eta=0.1, t_max=50, eps=0.05, n_v=0)
    res = tune(spec, params, x, cfg, rng.child(3))
    assert res.steps_used == 0
    assert res.converged
    assert np.all(res.trace.steps[0].aux == 1.0)


def test_divergence_raises_with_trace():
    # a huge rate slams every scalar to the clamp ceiling; the forward pass
    # then overflows at depth and the log loss leaves its domain
    spec = relu_mlp(70, 8, 0.3)
    x, params, rng = _setup(spec, 9, 4)
    cfg = TuneConfig(loss="jll", eta=1e6, t_max=5, n_v=0, grad_mode="analytic-relu")
    with pytest.raises(DivergenceError) as exc_info:
        np.seterr(all="ignore")
        try:
            tune(spec, params, x, cfg, rng.child(3))
        finally:
            np.seterr(all="warn")
    assert len(exc_info.value.trace.steps) >= 1
    assert np.isfinite(exc_info.value.trace.steps[0].loss)


def test_monotone_contraction_under_bound():
    spec = relu_mlp(5, 200, 2.4)
    x, params, rng = _setup(spec, 10, 8)
    cfg = TuneConfig(loss="jll", schedule="relu-bound", bound_safety=0.8, t_max=25,
                     n_v=0, grad_mode="analytic-relu")
    res = tune(spec, params, x, cfg, rng.child(3))
    dev = np.abs(np.sqrt(res.trace.js_matrix) - 1.0)
    assert np.all(dev[1:] <= dev[:-1] + 1e-9)


def test_return_mode_equivalence():
    spec = relu_mlp(3, 60, 2.0, 0.3)
    x, params, rng = _setup(spec, 11, 8)
    base = dict(loss="jll", eta=0.15, t_max=10, n_v=2)
    res_scale = tune(spec, params, x, TuneConfig(**base, return_mode="scale-sigmas"),
                     rng.child(3))
    res_freeze = tune(spec, params, x, TuneConfig(**base, return_mode="freeze-aux"),
                      rng.child(3))
    a = forward(res_scale.spec, res_scale.params, res_scale.aux, x)
    b = forward(res_freeze.spec, res_freeze.params, res_freeze.aux, x)
    for ba, bb in zip(a.boundaries, b.boundaries):
        assert np.allclose(ba, bb, rtol=1e-12)
    # and the scaled spec's sigmas reflect the tuned scalars
    tuned_a = res_freeze.aux.get(0, "W")
    assert res_scale.spec.blocks[0].sigma_w == pytest.approx(2.0 * tuned_a, rel=1e-12)


def test_layer_independence_relu():
    spec = relu_mlp(4, 200, 2.0)
    x, params, rng = _setup(spec, 12, 8)
    aux = AuxScalars.ones(spec)
    state = run_network(spec, params, aux, x)
    before = [exact_apjn(spec, params, aux, x, l, l + 1, state=state) for l in range(4)]
    aux.values[(2, "W")] = 0.5   # rescale only the second pair's weights
    state2 = run_network(spec, params, aux, x)
    after = [exact_apjn(spec, params, aux, x, l, l + 1, state=state2) for l in range(4)]
    assert after[1] == pytest.approx(0.25 * before[1], rel=1e-12)
    for l in (0, 2, 3):
        assert after[l] == pytest.approx(before[l], rel=1e-12)


def test_trace_csv_layout():
    spec = relu_mlp(2, 30, 2.0)
    x, params, rng = _setup(spec, 13, 4)
    cfg = TuneConfig(loss="jll", eta=0.1, t_max=3, n_v=2)
    res = tune(spec, params, x, cfg, rng.child(3))
    rows = res.trace.csv_rows()
    header = rows[0].split(",")
    assert header[:2] == ["t", "loss"]
    assert header[-1] == "eta"
    assert len(rows) == 1 + len(res.trace.steps)
    assert all(len(r.split(",")) == len(header) for r in rows[1:])


def test_gradient_flow_ratio_improves_after_tuning():
    # bias gradients under a quadratic probe loss carry the bare backward
    # product of block norms (no forward-magnitude factor), so off
    # criticality the first/last ratio explodes and tuning repairs it
    depth = 12
    spec = relu_mlp(depth, 60, 3.0)
    x, params, rng = _setup(spec, 14, 8)

    def ratio(spec_, params_, aux_):
        state = run_network(spec_, params_, aux_, x)
        out = state.boundary(spec_.n_boundaries - 1)
        grads = vjp_params(state, out)   # gradient of 0.5 * sum(out^2)
        return (float(np.linalg.norm(grads[(0, "b")]))
                / float(np.linalg.norm(grads[(2 * (depth - 1), "b")])))

    before = ratio(spec, params, AuxScalars.ones(spec))
    cfg = TuneConfig(loss="jll", eta=0.05, t_max=60, n_v=0, grad_mode="analytic-relu")
    res = tune(spec, params, x, cfg, rng.child(3))
    after = ratio(res.spec, res.params, res.aux)
    assert not (0.1 <= before <= 10.0)
    assert 0.1 <= after <= 10.0
