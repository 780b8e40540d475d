"""SGD on the twin network's auxiliary scalars.

Each step measures the per-pair Jacobian norms (and kernels, for the
kernel-augmented loss) on a fixed parameter draw, forms the loss, steps the
scalars down its gradient, and logs everything. Gradients come either from
central finite differences with common random numbers (same parameter draw
and probe vectors on both sides of every perturbation) or, for ReLU stacks,
from the closed form ``2 log(J) / a`` per layer.

Also here: the closed-form learning rates for ReLU stacks - the per-layer
rate that reaches criticality in one step, the time-t stability bound, and
the t=0 maximum-rate estimate - for both the log and square losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .apjn import estimate_segment, exact_apjn
from .blocks import (
    AuxScalars,
    NetworkSpec,
    ParamSet,
    run_network,
    scale_params,
    scale_spec_sigmas,
)
from .losses import jkl, jll, jsl, kernel_profile
from .tensor import Array, RngStream

AUX_CLAMP = (1e-6, 1e6)


class DivergenceError(RuntimeError):
    """Loss became non-finite; carries the trace up to the failure."""

    def __init__(self, message: str, trace: "TuneTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class TuneConfig:
    loss: str = "jll"                  # jll | jsl | jkl
    lam: float = 0.0                   # kernel weight for jkl
    eta: float | None = None           # required for the constant schedule
    schedule: str = "constant"         # constant | relu-bound | one-step
    bound_safety: float = 0.9          # fraction of the stability bound used
    t_max: int = 100
    eps: float = 0.0                   # stop once loss <= eps
    n_v: int = 2                       # probes per pair; 0 -> exact norms
    probe_mode: str = "auto"
    grad_mode: str = "finite-difference"   # finite-difference | analytic-relu
    fd_step: float = 1e-4              # relative finite-difference step
    return_mode: str = "scale-sigmas"  # scale-sigmas | freeze-aux
    aux_groups: object = "default"     # see AuxScalars.ones
    span: str = "include-io"           # include-io | interior-only
    fresh_batch: bool = False
    aux_clamp: tuple = AUX_CLAMP

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.loss not in ("jll", "jsl", "jkl"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.schedule not in ("constant", "relu-bound", "one-step"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "constant":
            if self.eta is None or self.eta <= 0:
                raise ValueError("constant schedule needs eta > 0")
        if self.grad_mode not in ("finite-difference", "analytic-relu"):
            raise ValueError(f"unknown grad mode {self.grad_mode!r}")
        if self.return_mode not in ("scale-sigmas", "freeze-aux"):
            raise ValueError(f"unknown return mode {self.return_mode!r}")
        if self.span not in ("include-io", "interior-only"):
            raise ValueError(f"unknown span {self.span!r}")
        if self.n_v < 0:
            raise ValueError("n_v must be >= 0")


@dataclass
class TuneStep:
    t: int
    loss: float
    js: np.ndarray
    aux: np.ndarray
    eta: float


@dataclass
class TuneTrace:
    pair_lo: int
    aux_keys: list
    steps: list = field(default_factory=list)

    def append(self, step: TuneStep):
        if self.steps and step.t <= self.steps[-1].t:
            raise ValueError("steps must be strictly increasing in t")
        self.steps.append(step)

    @property
    def losses(self) -> np.ndarray:
        return np.array([s.loss for s in self.steps])

    @property
    def js_matrix(self) -> np.ndarray:
        return np.array([s.js for s in self.steps])

    def csv_rows(self) -> list[str]:
        n_pairs = len(self.steps[0].js) if self.steps else 0
        jcols = [f"J_{self.pair_lo + i}" for i in range(n_pairs)]
        acols = [f"a_{i}_{g}" for (i, g) in self.aux_keys]
        rows = [",".join(["t", "loss"] + jcols + acols + ["eta"])]
        for s in self.steps:
            cells = [str(s.t), f"{s.loss:.12g}"]
            cells += [f"{v:.12g}" for v in s.js]
            cells += [f"{v:.12g}" for v in s.aux]
            cells.append(f"{s.eta:.12g}")
            rows.append(",".join(cells))
        return rows


@dataclass
class TuneResult:
    spec: NetworkSpec
    params: ParamSet
    aux: AuxScalars
    trace: TuneTrace
    converged: bool
    steps_used: int


# --------------------------------------------------------------------------
# measurement plumbing
# --------------------------------------------------------------------------

def _pair_list(spec: NetworkSpec, span: str) -> list[int]:
    lo = 0 if span == "include-io" else 1
    top = spec.n_boundaries - 1
    if lo >= top:
        raise ValueError("network has no tunable pairs in the chosen span")
    return list(range(lo, top))


def _measure(spec, params, aux, batch, cfg: TuneConfig, pairs, probe_rng: Callable):
    """Per-pair norms plus kernels; probe_rng(l) must be reproducible so the
    same stream is reused across finite-difference re-evaluations."""
    state = run_network(spec, params, aux, batch)
    js = np.empty(len(pairs))
    for n, l in enumerate(pairs):
        if cfg.n_v == 0:
            js[n] = exact_apjn(spec, params, aux, batch, l, l + 1, state=state)
        else:
            js[n], _, _ = estimate_segment(state, l, l + 1, cfg.n_v, probe_rng(l),
                                           probe_mode=cfg.probe_mode)
    ks = kernel_profile(state.activations)[pairs[0]:pairs[-1] + 2]
    return js, ks


def _loss_of(cfg: TuneConfig, js: np.ndarray, ks: np.ndarray) -> float:
    """Loss value, or inf when the measurement left its domain (overflowed
    activations yield zero or non-finite norms; log losses cannot price
    those, which the loop reports as divergence)."""
    if not np.all(np.isfinite(js)):
        return float("inf")
    try:
        if cfg.loss == "jll":
            return jll(js).total
        if cfg.loss == "jsl":
            return jsl(js).total
        if not np.all(np.isfinite(ks)):
            return float("inf")
        return jkl(js, ks, cfg.lam).total
    except ValueError:
        return float("inf")


def _pair_weight_blocks(spec: NetworkSpec, pairs) -> dict[int, int]:
    """pair -> index of its single weight-bearing block (analytic mode)."""
    owner: dict[int, int] = {}
    for l in pairs:
        weighted = [i for i in spec.segment(l, l + 1)
                    if spec.blocks[i].kind in ("dense", "conv2d", "patchembed")]
        if len(weighted) == 1:
            owner[l] = weighted[0]
    return owner


def _block_pair_map(spec: NetworkSpec, pairs) -> dict[int, int]:
    """block index -> pair whose segment contains it."""
    out = {}
    for l in pairs:
        for i in spec.segment(l, l + 1):
            out[i] = l
    return out


def grad_aux(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array,
             cfg: TuneConfig, rng: RngStream, *, js: np.ndarray | None = None,
             trace: TuneTrace | None = None) -> dict:
    """Gradient of the configured loss w.r.t. every tunable scalar.

    Finite-difference mode re-evaluates the loss at a*(1 +/- h) under common
    random numbers. Analytic mode uses the ReLU closed form: the weight
    scalar of the block generating pair l gets ``2 log(J_l) / a`` (times
    ``1 + lam`` for the kernel-augmented loss at sigma_b = 0) and bias
    scalars get zero.
    """
    pairs = _pair_list(spec, cfg.span)
    probe_rng = lambda l: rng.child(l)
    if cfg.grad_mode == "analytic-relu":
        if js is None:
            js, _ = _measure(spec, params, aux, batch, cfg, pairs, probe_rng)
        if not np.all(np.isfinite(js) & (js > 0)):
            raise DivergenceError("measured norms left the positive domain",
                                  trace or TuneTrace(pairs[0], aux.keys()))
        return _grad_analytic(spec, aux, cfg, pairs, js)
    base = aux.as_vector()
    keys = aux.keys()
    grads = {}
    h = cfg.fd_step
    for n, key in enumerate(keys):
        vec = base.copy()
        vec[n] = base[n] * (1.0 + h)
        jp, kp = _measure(spec, params, aux.with_vector(vec), batch, cfg, pairs, probe_rng)
        vec[n] = base[n] * (1.0 - h)
        jm, km = _measure(spec, params, aux.with_vector(vec), batch, cfg, pairs, probe_rng)
        lp, lm = _loss_of(cfg, jp, kp), _loss_of(cfg, jm, km)
        if not (math.isfinite(lp) and math.isfinite(lm)):
            raise DivergenceError(f"perturbed loss non-finite at {key}",
                                  trace or TuneTrace(pairs[0], keys))
        grads[key] = (lp - lm) / (2.0 * base[n] * h)
    return grads


def _grad_analytic(spec: NetworkSpec, aux: AuxScalars, cfg: TuneConfig, pairs, js):
    if cfg.loss == "jkl":
        sigmas_b = [b.sigma_b for b in spec.blocks if b.kind in ("dense", "conv2d", "patchembed")]
        if any(s != 0 for s in sigmas_b):
            raise ValueError("analytic gradients for the kernel loss need sigma_b = 0")
    owners = _pair_weight_blocks(spec, pairs)
    block_of = {blk: l for l, blk in owners.items()}
    jmap = {l: js[n] for n, l in enumerate(pairs)}
    grads = {}
    for (i, g) in aux.keys():
        if g != "W" or i not in block_of:
            grads[(i, g)] = 0.0
            continue
        jl = jmap[block_of[i]]
        a = aux.get(i, "W")
        if cfg.loss == "jsl":
            grads[(i, g)] = (2.0 * jl / a) * (jl - 1.0)
        else:
            scale = 1.0 + cfg.lam if cfg.loss == "jkl" else 1.0
            grads[(i, g)] = scale * 2.0 * math.log(jl) / a
    return grads


def _pair_sigma_w(spec: NetworkSpec, pairs) -> dict[int, float]:
    owners = _pair_weight_blocks(spec, pairs)
    return {l: spec.blocks[i].sigma_w for l, i in owners.items()}


# --------------------------------------------------------------------------
# the tuning loop
# --------------------------------------------------------------------------

def tune(spec: NetworkSpec, params: ParamSet, batch: Array, cfg: TuneConfig,
         rng: RngStream, *, batch_provider: Callable | None = None) -> TuneResult:
    """Run the scalar-tuning loop until the loss drops below ``eps`` or
    ``t_max`` steps elapse.

    The parameter draw is fixed throughout; the batch too, unless
    ``fresh_batch`` and a ``batch_provider(t)`` are given. On exit the
    scalars are folded into the returned model: either into the sigmas and
    parameters ("scale-sigmas") or kept as frozen multipliers
    ("freeze-aux"). A non-finite loss raises :class:`DivergenceError`
    carrying the partial trace.
    """
    pairs = _pair_list(spec, cfg.span)
    aux = AuxScalars.ones(spec, cfg.aux_groups)
    keys = aux.keys()
    if not keys:
        raise ValueError("no tunable scalars for the chosen aux groups")
    trace = TuneTrace(pairs[0], keys)
    sigma_of_pair = _pair_sigma_w(spec, pairs)
    owners = _pair_weight_blocks(spec, pairs)

    def measure_at(t: int, aux_now: AuxScalars):
        step_rng = rng.child(t)
        return _measure(spec, params, aux_now, batch, cfg, pairs,
                        lambda l: step_rng.child(l))

    def need_pair_sigmas():
        missing = [l for l in pairs if l not in sigma_of_pair]
        if missing:
            raise ValueError(f"schedule needs one weight block per pair; pairs {missing} differ")

    t = 0
    js, ks = _measure_fresh(spec, params, aux, batch, cfg, pairs, rng, t,
                            batch_provider)
    loss = _loss_of(cfg, js, ks)
    trace.append(TuneStep(t, loss, js.copy(), aux.as_vector(), 0.0))
    if not math.isfinite(loss):
        raise DivergenceError("initial loss non-finite", trace)

    while t < cfg.t_max and loss > cfg.eps:
        step_rng = rng.child(t)
        grads = grad_aux(spec, params, aux, batch, cfg, step_rng,
                         js=js if cfg.grad_mode == "analytic-relu" else None,
                         trace=trace)
        if cfg.schedule == "constant":
            eta_used = cfg.eta
            rates = {key: cfg.eta for key in keys}
        elif cfg.schedule == "relu-bound":
            need_pair_sigmas()
            bounds = [eta_bound([js[n]], sigma_of_pair[l], loss=cfg.loss if cfg.loss != "jkl" else "jll")
                      for n, l in enumerate(pairs)]
            eta_used = cfg.bound_safety * min(bounds)
            rates = {key: eta_used for key in keys}
        else:  # one-step, per layer
            need_pair_sigmas()
            rates = {}
            per_pair = {}
            for n, l in enumerate(pairs):
                per_pair[l] = eta_one_step(js[n], sigma_of_pair[l],
                                           loss=cfg.loss if cfg.loss != "jkl" else "jll")
            block_of = {blk: l for l, blk in owners.items()}
            for key in keys:
                i, _ = key
                rates[key] = per_pair.get(block_of.get(i, -1), 0.0)
            eta_used = min(per_pair.values())
        new_vals = {key: aux.get(*key) - rates[key] * grads.get(key, 0.0) for key in keys}
        aux = AuxScalars(new_vals).clamped(*cfg.aux_clamp)
        t += 1
        js, ks = _measure_fresh(spec, params, aux, batch, cfg, pairs, rng, t, batch_provider)
        loss = _loss_of(cfg, js, ks)
        if not math.isfinite(loss):
            trace.append(TuneStep(t, float("inf"), js.copy(), aux.as_vector(), eta_used))
            raise DivergenceError(f"loss diverged at step {t}", trace)
        trace.append(TuneStep(t, loss, js.copy(), aux.as_vector(), eta_used))

    converged = loss <= cfg.eps
    if cfg.return_mode == "scale-sigmas":
        out_spec = scale_spec_sigmas(spec, aux)
        out_params = scale_params(spec, params, aux)
        out_aux = AuxScalars({k: 1.0 for k in aux.values})
        return TuneResult(out_spec, out_params, out_aux, trace, converged, t)
    return TuneResult(spec, params, aux, trace, converged, t)


def _measure_fresh(spec, params, aux, batch, cfg, pairs, rng, t, batch_provider):
    if cfg.fresh_batch and batch_provider is not None:
        batch = batch_provider(t)
    step_rng = rng.child(t)
    return _measure(spec, params, aux, batch, cfg, pairs, lambda l: step_rng.child(l))


# --------------------------------------------------------------------------
# closed-form learning rates (ReLU stacks)
# --------------------------------------------------------------------------

_J_ONE_TOL = 1e-12


def eta_bound(j, sigma_w: float, a_w=None, loss: str = "jll") -> float:
    """Largest stable rate at the current norms: below this bound,
    |sqrt(J) - 1| shrinks monotonically for every layer.

    The bound depends on the scalars only through the measured norms, so
    ``a_w`` is accepted for interface symmetry but unused. At J = 1 the log
    form takes its limit value 1 / sigma_w^2.
    """
    arr = np.atleast_1d(np.asarray(j, dtype=np.float64))
    if np.any(arr <= 0):
        raise ValueError("norms must be positive")
    if loss == "jll":
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = 2.0 * (np.sqrt(arr) - 1.0) * np.sqrt(arr) / (sigma_w ** 2 * np.log(arr))
        vals = np.where(np.abs(np.log(arr)) < _J_ONE_TOL, 1.0 / sigma_w ** 2, raw)
    elif loss == "jsl":
        vals = 2.0 / (sigma_w ** 2 * np.sqrt(arr) * (1.0 + np.sqrt(arr)))
    else:
        raise ValueError(f"no bound for loss {loss!r}")
    return float(vals.min())


def eta_one_step(j0: float, sigma_w: float, loss: str = "jll") -> float:
    """Per-layer rate that solves the one-step recursion to J(1) = 1."""
    if j0 <= 0:
        raise ValueError("norm must be positive")
    if loss == "jll":
        if abs(math.log(j0)) < _J_ONE_TOL:
            return 1.0 / (2.0 * sigma_w ** 2)
        return (math.sqrt(j0) - 1.0) * math.sqrt(j0) / (sigma_w ** 2 * math.log(j0))
    if loss == "jsl":
        return 1.0 / (sigma_w ** 2 * math.sqrt(j0) * (1.0 + math.sqrt(j0)))
    raise ValueError(f"no one-step rate for loss {loss!r}")


def eta_zero(a_w: float, sigma_w: float, loss: str = "jll") -> float:
    """Maximum-rate estimate at t = 0, using J(0) = (a_w sigma_w)^2 / 2."""
    if a_w <= 0 or sigma_w <= 0:
        raise ValueError("a_w and sigma_w must be positive")
    if loss == "jll":
        logs = math.log((a_w * sigma_w) ** 2) - math.log(2.0)
        if abs(logs) < 1e-12:
            raise ValueError("singular at a_w * sigma_w = sqrt(2)")
        return (a_w * sigma_w - math.sqrt(2.0)) * a_w / (sigma_w * logs)
    if loss == "jsl":
        return 4.0 / (sigma_w ** 3 * a_w * (math.sqrt(2.0) + a_w * sigma_w))
    raise ValueError(f"no t=0 rate for loss {loss!r}")
