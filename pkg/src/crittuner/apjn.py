"""Average partial Jacobian norms between measurement boundaries.

The observable is the squared Frobenius norm of the Jacobian of one
flattened boundary activation with respect to an earlier one, normalized by
batch size and output width. ``exact_apjn`` accumulates it from basis
tangents (forward columns or reverse rows, whichever side is narrower);
``estimate_apjn`` is the unbiased Monte-Carlo version driven by Gaussian
probe vectors, one JVP/VJP sweep per probe.

Networks without batch normalization have batch-block-diagonal Jacobians,
so both paths collapse the batch index and a single broadcast basis covers
every sample at once. With batch normalization the full cross-sample
structure is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .blocks import (
    AuxScalars,
    ForwardState,
    NetworkSpec,
    ParamSet,
    init_params,
    jvp_segment,
    run_network,
    vjp_segment,
)
from .tensor import Array, RngStream

DEFAULT_MAX_ENTRIES = int(2e8)
_CHUNK = 128


class ResourceBudgetError(RuntimeError):
    """Exact Jacobian would exceed the configured entry budget."""


@dataclass
class ApjnPair:
    l0: int
    l: int
    value: float
    stderr: float | None
    method: str               # "exact" | "estimated"
    n_v: int | None
    batch_size: int
    n_param_samples: int


@dataclass
class ApjnReport:
    pairs: list

    CSV_HEADER = "l0,l,value,stderr,method,N_v,batch,samples"

    def csv_rows(self) -> list[str]:
        rows = [self.CSV_HEADER]
        for p in self.pairs:
            stderr = "" if p.stderr is None else f"{p.stderr:.10g}"
            n_v = "" if p.n_v is None else str(p.n_v)
            rows.append(f"{p.l0},{p.l},{p.value:.12g},{stderr},{p.method},{n_v},"
                        f"{p.batch_size},{p.n_param_samples}")
        return rows

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])


def _segment_dims(spec: NetworkSpec, l0: int, l1: int) -> tuple[int, int]:
    return spec.boundary_dim(l0), spec.boundary_dim(l1)


def _basis_chunks(dim: int, bsz: int, per_sample: bool) -> Iterator[Array]:
    """Basis stacks [S, B, dim]: broadcast identity rows, or one-hot in
    (sample, coordinate) when the segment couples the batch."""
    if not per_sample:
        eye = np.eye(dim)
        for c0 in range(0, dim, _CHUNK):
            rows = eye[c0:min(c0 + _CHUNK, dim)]
            yield np.broadcast_to(rows[:, None, :], (rows.shape[0], bsz, dim)).copy()
    else:
        total = bsz * dim
        for c0 in range(0, total, _CHUNK):
            idx = np.arange(c0, min(c0 + _CHUNK, total))
            t = np.zeros((idx.size, bsz, dim))
            t[np.arange(idx.size), idx // dim, idx % dim] = 1.0
            yield t


def exact_apjn(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array,
               l0: int, l: int, *, max_entries: int = DEFAULT_MAX_ENTRIES,
               state: ForwardState | None = None) -> float:
    """Exact boundary-to-boundary squared Jacobian norm for one parameter draw.

    Averages over the batch and normalizes by the output width; expectation
    over parameter draws is up to the caller (see ``apjn_profile``).
    """
    if state is None:
        state = run_network(spec, params, aux, batch)
    d0, d1 = _segment_dims(spec, l0, l)
    bsz = state.batch_size
    coupled = spec.segment_has_batchnorm(l0, l)
    b_eff = bsz if coupled else 1
    entries = d0 * d1 * b_eff * b_eff
    if entries > max_entries:
        raise ResourceBudgetError(
            f"exact Jacobian needs {entries:.3g} entries (budget {max_entries:.3g}); "
            f"use estimate_apjn instead")
    ssq = 0.0
    if d0 * b_eff <= d1 * b_eff:
        for t in _basis_chunks(d0, bsz, coupled):
            out = jvp_segment(state, l0, l, t)
            ssq += float(np.sum(out * out))
    else:
        for g in _basis_chunks(d1, bsz, coupled):
            out = vjp_segment(state, l0, l, g)
            ssq += float(np.sum(out * out))
    return ssq / (bsz * d1)


def estimate_segment(state: ForwardState, l0: int, l1: int, n_v: int, rng: RngStream,
                     *, probe_mode: str = "auto") -> tuple[float, float, np.ndarray]:
    """Probe-vector estimate of the (l0, l1) norm; returns (value, stderr, terms).

    "output" probes contract a fresh unit Gaussian vector with the upper
    boundary and pull it back (the estimator the tuner differentiates
    through); "input" probes push a Gaussian tangent forward instead, which
    costs one sweep per probe even across batch normalization. "auto" picks
    "output" for batch-decoupled segments and "input" otherwise.
    """
    if n_v < 1:
        raise ValueError(f"need at least one probe vector, got {n_v}")
    spec = state.spec
    d0, d1 = _segment_dims(spec, l0, l1)
    bsz = state.batch_size
    coupled = spec.segment_has_batchnorm(l0, l1)
    mode = probe_mode
    if mode == "auto":
        mode = "input" if coupled else "output"
    if mode not in ("output", "input"):
        raise ValueError(f"unknown probe mode {probe_mode!r}")
    terms = np.empty(n_v)
    norm = bsz * d1
    for m in range(n_v):
        if mode == "output":
            v = rng.normal(d1)
            if coupled:
                ssq = 0.0
                for c0 in range(0, bsz, _CHUNK):
                    n = min(_CHUNK, bsz - c0)
                    g = np.zeros((n, bsz, d1))
                    g[np.arange(n), c0 + np.arange(n), :] = v
                    out = vjp_segment(state, l0, l1, g)
                    ssq += float(np.sum(out * out))
                terms[m] = ssq / norm
            else:
                g = np.broadcast_to(v, (1, bsz, d1)).copy()
                out = vjp_segment(state, l0, l1, g)
                terms[m] = float(np.sum(out * out)) / norm
        else:
            u = rng.normal((1, bsz, d0))
            out = jvp_segment(state, l0, l1, u)
            terms[m] = float(np.sum(out * out)) / norm
    value = float(terms.mean())
    stderr = float(terms.std(ddof=1) / np.sqrt(n_v)) if n_v > 1 else float("nan")
    return value, stderr, terms


def estimate_apjn(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array,
                  l: int, n_v: int, rng: RngStream, *, l1: int | None = None,
                  probe_mode: str = "auto",
                  state: ForwardState | None = None) -> tuple[float, float]:
    """Unbiased probe estimate of the (l, l+1) norm with its standard error."""
    if state is None:
        state = run_network(spec, params, aux, batch)
    value, stderr, _ = estimate_segment(state, l, l + 1 if l1 is None else l1,
                                        n_v, rng, probe_mode=probe_mode)
    return value, stderr


def profile_pairs(spec: NetworkSpec, k: int) -> list[tuple[int, int]]:
    """Non-overlapping (l, l+k) pairs covering all boundaries 0..L+1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = spec.n_boundaries - 1
    pairs = []
    l = 0
    while l < top:
        pairs.append((l, min(l + k, top)))
        l += k
    return pairs


def apjn_profile(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array,
                 k: int = 1, *, method: str = "auto", n_v: int = 16,
                 n_param_samples: int = 1, rng: RngStream | None = None,
                 probe_mode: str = "auto",
                 max_entries: int = DEFAULT_MAX_ENTRIES) -> ApjnReport:
    """Per-pair norms over the skip-k cover of the network.

    ``n_param_samples > 1`` re-initializes the parameters per sample (the
    supplied ``params`` is sample zero) and averages; ``method`` is "exact",
    "estimate", or "auto" (exact when the budget allows).
    """
    if method not in ("auto", "exact", "estimate"):
        raise ValueError(f"unknown method {method!r}")
    if rng is None:
        if n_param_samples > 1 or method != "exact":
            raise ValueError("rng required for estimation or parameter resampling")
        rng = RngStream(0)
    pairs = profile_pairs(spec, k)
    bsz = np.asarray(batch).shape[0]
    per_pair_vals: dict[tuple[int, int], list[float]] = {p: [] for p in pairs}
    per_pair_err: dict[tuple[int, int], list[float]] = {p: [] for p in pairs}
    methods: dict[tuple[int, int], str] = {}
    for s in range(n_param_samples):
        ps = params if s == 0 else init_params(spec, rng.child(10_000 + s))
        state = run_network(spec, ps, aux, batch)
        for (l0, l1) in pairs:
            m = method
            if m == "auto":
                coupled = spec.segment_has_batchnorm(l0, l1)
                b_eff = bsz if coupled else 1
                within = spec.boundary_dim(l0) * spec.boundary_dim(l1) * b_eff * b_eff <= max_entries
                m = "exact" if within else "estimate"
            if m == "exact":
                val = exact_apjn(spec, ps, aux, batch, l0, l1,
                                 max_entries=max_entries, state=state)
                err = float("nan")
            else:
                val, err, _ = estimate_segment(state, l0, l1, n_v,
                                               rng.child(20_000 + s * 1000 + l0),
                                               probe_mode=probe_mode)
            per_pair_vals[(l0, l1)].append(val)
            per_pair_err[(l0, l1)].append(err)
            methods[(l0, l1)] = m
    out = []
    for (l0, l1) in pairs:
        vals = np.array(per_pair_vals[(l0, l1)])
        m = methods[(l0, l1)]
        value = float(vals.mean())
        if m == "exact":
            stderr, n_v_used = None, None
        else:
            n_v_used = n_v
            if n_param_samples > 1:
                stderr = float(vals.std(ddof=1) / np.sqrt(len(vals)))
            else:
                stderr = per_pair_err[(l0, l1)][0]
        out.append(ApjnPair(l0, l1, value, stderr, "estimated" if m == "estimate" else "exact",
                            n_v_used, bsz, n_param_samples))
    return ApjnReport(out)


def factorization_residual(spec: NetworkSpec, params: ParamSet, aux: AuxScalars,
                           batch: Array, l: int, *,
                           max_entries: int = DEFAULT_MAX_ENTRIES,
                           state: ForwardState | None = None) -> float:
    """Relative gap between the two-step norm and the product of one-step norms."""
    if state is None:
        state = run_network(spec, params, aux, batch)
    j02 = exact_apjn(spec, params, aux, batch, l, l + 2, max_entries=max_entries, state=state)
    j01 = exact_apjn(spec, params, aux, batch, l, l + 1, max_entries=max_entries, state=state)
    j12 = exact_apjn(spec, params, aux, batch, l + 1, l + 2, max_entries=max_entries, state=state)
    return abs(j02 - j01 * j12) / j02
