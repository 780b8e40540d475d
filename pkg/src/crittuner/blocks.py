"""Feedforward block networks and their twin-network scalars.

A network is an ordered list of :class:`BlockSpec` entries (dense, conv,
activation, batch normalization, elementwise affine, residual open/close,
layer scaling, pooling, patch embedding). Blocks flagged ``boundary=True``
end a measurement group: the forward pass records the flattened activation
there, and Jacobians are always taken between two such boundaries.

Every parameterized block carries per-group auxiliary scalars (the "twin
network"): the forward pass uses ``a_W * W`` and ``a_b * b`` in place of the
raw draws, so scaling the scalars is exactly equivalent to scaling the
parameters themselves. Each block also knows how to push a tangent forward
(JVP) and pull a cotangent back (VJP) through itself; tangent/cotangent
arrays are stack-first, shaped ``[S, B, ...]`` for ``S`` simultaneous
probe vectors over a batch of ``B`` samples. Batch normalization couples
samples, so its JVP/VJP keep the full cross-sample structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .tensor import Array, RngStream, flatten_batch

# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _npdf(x: Array) -> Array:
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def relu(x):
    return np.maximum(x, 0.0)


def relu_deriv(x):
    # derivative at exactly 0 taken as 0 (measure-zero point)
    return (x > 0.0).astype(np.float64)


def gelu(x):
    """Exact GELU x * Phi(x) with the standard normal CDF (no tanh fit)."""
    return x * ndtr(x)


def gelu_deriv(x):
    return ndtr(x) + x * _npdf(x)


def tanh_act(x):
    return np.tanh(x)


def tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def linear_act(x):
    return x


def linear_deriv(x):
    return np.ones_like(x)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (relu, relu_deriv),
    "gelu": (gelu, gelu_deriv),
    "tanh": (tanh_act, tanh_deriv),
    "linear": (linear_act, linear_deriv),
}

# --------------------------------------------------------------------------
# block and network specs
# --------------------------------------------------------------------------

DEFAULT_BN_EPS = 1e-5

# parameter groups owned by each kind, in draw order
PARAM_GROUPS: dict[str, tuple[str, ...]] = {
    "dense": ("W", "b"),
    "conv2d": ("W", "b"),
    "patchembed": ("W", "b"),
    "affine": ("alpha", "beta"),
    "layerscale": ("scale",),
}

# groups that receive auxiliary scalars by default (plain weight layers)
DEFAULT_AUX_GROUPS = frozenset({"W", "b"})
ALL_AUX_GROUPS = frozenset({"W", "b", "alpha", "beta", "scale"})


@dataclass
class BlockSpec:
    """One block of the network; unused fields stay at their defaults."""

    kind: str
    boundary: bool = False
    fan_in: int = 0
    fan_out: int = 0
    axis: int = -1            # dense mixing axis: -1 features, 1 patch grid
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    sigma_w: float = 1.0
    sigma_b: float = 0.0
    act: str = ""
    eps_bn: float = DEFAULT_BN_EPS
    alpha_init: float = 1.0
    beta_init: float = 0.0
    eps_ls: float = 0.0
    mu: float = 1.0           # skip strength on residual close
    patch: int = 0


def dense(fan_out: int, sigma_w: float, sigma_b: float = 0.0, *, fan_in: int = 0,
          axis: int = -1, boundary: bool = False) -> BlockSpec:
    return BlockSpec("dense", boundary=boundary, fan_in=fan_in, fan_out=fan_out,
                     axis=axis, sigma_w=sigma_w, sigma_b=sigma_b)


def conv2d(out_ch: int, kernel: int, sigma_w: float, sigma_b: float = 0.0, *,
           stride: int = 1, padding: int = 0, boundary: bool = False) -> BlockSpec:
    return BlockSpec("conv2d", boundary=boundary, fan_out=out_ch, kernel=kernel,
                     stride=stride, padding=padding, sigma_w=sigma_w, sigma_b=sigma_b)


def activation(kind: str, boundary: bool = False) -> BlockSpec:
    return BlockSpec("activation", boundary=boundary, act=kind)


def batchnorm(eps: float = DEFAULT_BN_EPS, boundary: bool = False) -> BlockSpec:
    return BlockSpec("batchnorm", boundary=boundary, eps_bn=eps)


def affine_norm(alpha: float = 1.0, beta: float = 0.0, boundary: bool = False) -> BlockSpec:
    return BlockSpec("affine", boundary=boundary, alpha_init=alpha, beta_init=beta)


def layer_scale(eps_ls: float, boundary: bool = False) -> BlockSpec:
    return BlockSpec("layerscale", boundary=boundary, eps_ls=eps_ls)


def residual_open() -> BlockSpec:
    return BlockSpec("res_open")


def residual_close(mu: float = 1.0, boundary: bool = False) -> BlockSpec:
    return BlockSpec("res_close", boundary=boundary, mu=mu)


def flatten_block(boundary: bool = False) -> BlockSpec:
    return BlockSpec("flatten", boundary=boundary)


def avg_pool(boundary: bool = False) -> BlockSpec:
    return BlockSpec("avgpool", boundary=boundary)


def patch_embed(patch: int, dim: int, sigma_w: float, sigma_b: float = 0.0,
                boundary: bool = False) -> BlockSpec:
    return BlockSpec("patchembed", boundary=boundary, fan_out=dim, patch=patch,
                     sigma_w=sigma_w, sigma_b=sigma_b)


def _feature_dim(shape: tuple[int, ...]) -> int:
    # elementwise vectors act per feature: last axis for flat/patch data,
    # channel axis for conv data
    if len(shape) in (1, 2):
        return shape[-1]
    if len(shape) == 3:
        return shape[0]
    raise ValueError(f"no feature axis for shape {shape}")


@dataclass(eq=True)
class NetworkSpec:
    """Ordered block list plus the per-sample input shape.

    Construction resolves inferred fan-ins, propagates shapes, and checks
    residual nesting; ``shapes[i]`` is the per-sample shape after block
    ``i-1`` (``shapes[0]`` is the input shape). Boundaries are the cut
    points where activations are recorded: the input, every flagged block,
    and the final output.
    """

    blocks: tuple[BlockSpec, ...]
    input_shape: tuple[int, ...]
    shapes: list[tuple[int, ...]] = field(init=False, compare=False, repr=False)
    cuts: list[int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if any(d <= 0 for d in self.input_shape):
            raise ValueError(f"input shape must be positive, got {self.input_shape}")
        resolved = []
        shapes = [self.input_shape]
        stack: list[tuple[int, ...]] = []
        for idx, blk in enumerate(self.blocks):
            cur = shapes[-1]
            blk = replace(blk)
            try:
                cur = self._propagate(blk, cur, stack)
            except ValueError as exc:
                raise ValueError(f"block {idx} ({blk.kind}): {exc}") from None
            if blk.boundary and stack:
                raise ValueError(f"block {idx}: boundary inside an open residual branch")
            resolved.append(blk)
            shapes.append(cur)
        if stack:
            raise ValueError("unclosed residual branch")
        self.blocks = tuple(resolved)
        self.shapes = shapes
        cuts = [0] + [i + 1 for i, blk in enumerate(self.blocks) if blk.boundary]
        if not self.blocks:
            raise ValueError("network has no blocks")
        if cuts[-1] != len(self.blocks):
            cuts.append(len(self.blocks))
        self.cuts = cuts

    @staticmethod
    def _propagate(blk: BlockSpec, cur: tuple[int, ...], stack: list) -> tuple[int, ...]:
        if blk.kind == "dense":
            if blk.fan_out <= 0 or blk.sigma_w <= 0 or blk.sigma_b < 0:
                raise ValueError("need fan_out > 0, sigma_w > 0, sigma_b >= 0")
            if blk.axis == -1:
                want = cur[-1]
                out = (*cur[:-1], blk.fan_out)
            elif blk.axis == 1 and len(cur) == 2:
                want = cur[0]
                out = (blk.fan_out, cur[1])
            else:
                raise ValueError(f"axis {blk.axis} not applicable to shape {cur}")
            if blk.fan_in and blk.fan_in != want:
                raise ValueError(f"fan_in {blk.fan_in} != incoming {want}")
            blk.fan_in = want
            return out
        if blk.kind == "conv2d":
            if len(cur) != 3:
                raise ValueError(f"conv needs (C, H, W) input, got {cur}")
            if blk.fan_out <= 0 or blk.kernel <= 0 or blk.stride < 1 or blk.padding < 0:
                raise ValueError("bad conv geometry")
            if blk.sigma_w <= 0 or blk.sigma_b < 0:
                raise ValueError("need sigma_w > 0, sigma_b >= 0")
            c, h, w = cur
            blk.fan_in = c
            ho = (h + 2 * blk.padding - blk.kernel) // blk.stride + 1
            wo = (w + 2 * blk.padding - blk.kernel) // blk.stride + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"kernel {blk.kernel} does not fit input {cur}")
            return (blk.fan_out, ho, wo)
        if blk.kind == "activation":
            if blk.act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {blk.act!r}")
            return cur
        if blk.kind == "batchnorm":
            if len(cur) not in (1, 3):
                raise ValueError(f"batchnorm expects flat or (C, H, W) input, got {cur}")
            if blk.eps_bn < 0:
                raise ValueError("eps_bn must be >= 0")
            return cur
        if blk.kind in ("affine", "layerscale"):
            if blk.kind == "layerscale" and blk.eps_ls < 0:
                raise ValueError("eps_ls must be >= 0")
            blk.fan_out = _feature_dim(cur)
            return cur
        if blk.kind == "res_open":
            stack.append(cur)
            return cur
        if blk.kind == "res_close":
            if not stack:
                raise ValueError("residual close without open")
            if blk.mu < 0:
                raise ValueError("mu must be >= 0")
            opened = stack.pop()
            if opened != cur:
                raise ValueError(f"skip shape {opened} != branch shape {cur}")
            return cur
        if blk.kind == "flatten":
            return (int(np.prod(cur)),)
        if blk.kind == "avgpool":
            if len(cur) == 2:
                return (cur[1],)
            if len(cur) == 3:
                return (cur[0],)
            raise ValueError(f"avgpool expects (P, d) or (C, H, W) input, got {cur}")
        if blk.kind == "patchembed":
            if len(cur) != 3:
                raise ValueError(f"patch embedding needs (C, H, W) input, got {cur}")
            c, h, w = cur
            if blk.patch <= 0 or h % blk.patch or w % blk.patch:
                raise ValueError(f"patch size {blk.patch} does not tile {cur}")
            if blk.fan_out <= 0 or blk.sigma_w <= 0 or blk.sigma_b < 0:
                raise ValueError("bad patch embedding parameters")
            blk.fan_in = c * blk.patch * blk.patch
            return ((h // blk.patch) * (w // blk.patch), blk.fan_out)
        raise ValueError(f"unknown block kind {blk.kind!r}")

    # -- boundary bookkeeping ------------------------------------------------
    @property
    def n_boundaries(self) -> int:
        return len(self.cuts)

    @property
    def L(self) -> int:
        """Number of interior measurement boundaries (total is L + 2)."""
        return len(self.cuts) - 2

    def boundary_shape(self, b: int) -> tuple[int, ...]:
        return self.shapes[self.cuts[b]]

    def boundary_dim(self, b: int) -> int:
        return int(np.prod(self.boundary_shape(b)))

    def segment(self, b0: int, b1: int) -> range:
        """Block indices strictly between boundary b0 and boundary b1."""
        if not 0 <= b0 < b1 <= self.n_boundaries - 1:
            raise ValueError(f"need 0 <= l0 < l <= {self.n_boundaries - 1}, got ({b0}, {b1})")
        return range(self.cuts[b0], self.cuts[b1])

    def segment_has_batchnorm(self, b0: int, b1: int) -> bool:
        return any(self.blocks[i].kind == "batchnorm" for i in self.segment(b0, b1))

    @property
    def has_batchnorm(self) -> bool:
        return any(b.kind == "batchnorm" for b in self.blocks)


# --------------------------------------------------------------------------
# parameters and auxiliary scalars
# --------------------------------------------------------------------------

ParamSet = list  # list[dict[str, Array]], parallel to spec.blocks


def init_params(spec: NetworkSpec, rng: RngStream) -> ParamSet:
    """Sample all block parameters: weights N(0, sigma_w^2 / fan_in),
    biases N(0, sigma_b^2), affine at identity, layer scale at eps_ls."""
    params: ParamSet = []
    for i, blk in enumerate(spec.blocks):
        r = rng.child(i)
        p: dict[str, Array] = {}
        if blk.kind == "dense":
            p["W"] = r.normal((blk.fan_out, blk.fan_in), 0.0, blk.sigma_w / np.sqrt(blk.fan_in))
            p["b"] = r.normal((blk.fan_out,), 0.0, blk.sigma_b)
        elif blk.kind == "conv2d":
            std = blk.sigma_w / np.sqrt(blk.fan_in * blk.kernel * blk.kernel)
            p["W"] = r.normal((blk.fan_out, blk.fan_in, blk.kernel, blk.kernel), 0.0, std)
            p["b"] = r.normal((blk.fan_out,), 0.0, blk.sigma_b)
        elif blk.kind == "patchembed":
            p["W"] = r.normal((blk.fan_out, blk.fan_in), 0.0, blk.sigma_w / np.sqrt(blk.fan_in))
            p["b"] = r.normal((blk.fan_out,), 0.0, blk.sigma_b)
        elif blk.kind == "affine":
            p["alpha"] = np.full(blk.fan_out, blk.alpha_init, dtype=np.float64)
            p["beta"] = np.full(blk.fan_out, blk.beta_init, dtype=np.float64)
        elif blk.kind == "layerscale":
            p["scale"] = np.full(blk.fan_out, blk.eps_ls, dtype=np.float64)
        params.append(p)
    return params


class AuxScalars:
    """Per-parameter-group scalar multipliers of the twin network.

    ``values`` maps ``(block_index, group)`` to a strictly positive float.
    Groups not present behave as fixed 1.0. ``groups`` selects which
    parameter groups are tunable: "default" covers plain weight layers
    (W, b), "all" additionally covers affine and layer-scale vectors, or
    pass an explicit set of group names.
    """

    def __init__(self, values: dict[tuple[int, str], float]):
        self.values = {k: float(v) for k, v in values.items()}

    @classmethod
    def ones(cls, spec: NetworkSpec, groups="default") -> "AuxScalars":
        if groups == "default":
            allowed = DEFAULT_AUX_GROUPS
        elif groups == "all":
            allowed = ALL_AUX_GROUPS
        elif groups == "none":
            allowed = frozenset()
        else:
            allowed = frozenset(groups)
            unknown = allowed - ALL_AUX_GROUPS
            if unknown:
                raise ValueError(f"unknown aux groups {sorted(unknown)}")
        vals = {}
        for i, blk in enumerate(spec.blocks):
            for g in PARAM_GROUPS.get(blk.kind, ()):
                if g in allowed:
                    vals[(i, g)] = 1.0
        return cls(vals)

    def get(self, i: int, group: str) -> float:
        return self.values.get((i, group), 1.0)

    def keys(self) -> list[tuple[int, str]]:
        return sorted(self.values.keys())

    def copy(self) -> "AuxScalars":
        return AuxScalars(self.values)

    def as_vector(self) -> np.ndarray:
        return np.array([self.values[k] for k in self.keys()], dtype=np.float64)

    def with_vector(self, vec: Sequence[float]) -> "AuxScalars":
        keys = self.keys()
        if len(vec) != len(keys):
            raise ValueError("vector length mismatch")
        return AuxScalars({k: float(v) for k, v in zip(keys, vec)})

    def clamped(self, lo: float, hi: float) -> "AuxScalars":
        return AuxScalars({k: min(max(v, lo), hi) for k, v in self.values.items()})

    def __eq__(self, other):
        return isinstance(other, AuxScalars) and self.values == other.values

    def __repr__(self) -> str:  # pragma: no cover
        items = ", ".join(f"({i},{g})={v:.4g}" for (i, g), v in sorted(self.values.items()))
        return f"AuxScalars({items})"


def scale_params(spec: NetworkSpec, params: ParamSet, aux: AuxScalars) -> ParamSet:
    """Fold the auxiliary scalars into the parameters: theta -> a * theta."""
    out: ParamSet = []
    for i, blk in enumerate(spec.blocks):
        out.append({g: aux.get(i, g) * arr for g, arr in params[i].items()})
    return out


def scale_spec_sigmas(spec: NetworkSpec, aux: AuxScalars) -> NetworkSpec:
    """Fold auxiliary scalars into the hyperparameters (sigma -> sigma * a),
    so a fresh draw from the returned spec matches the tuned twin in
    distribution."""
    blocks = []
    for i, blk in enumerate(spec.blocks):
        blk = replace(blk)
        if blk.kind in ("dense", "conv2d", "patchembed"):
            blk.sigma_w *= aux.get(i, "W")
            blk.sigma_b *= aux.get(i, "b")
        elif blk.kind == "affine":
            blk.alpha_init *= aux.get(i, "alpha")
            blk.beta_init *= aux.get(i, "beta")
        elif blk.kind == "layerscale":
            blk.eps_ls *= aux.get(i, "scale")
        blocks.append(blk)
    return NetworkSpec(tuple(blocks), spec.input_shape)


# --------------------------------------------------------------------------
# forward pass
# --------------------------------------------------------------------------

@dataclass
class BatchActivations:
    """Flattened activations at every measurement boundary for one batch."""

    boundaries: list  # list[Array [B, N_l]]
    batch_size: int

    @property
    def dims(self) -> list[int]:
        return [a.shape[1] for a in self.boundaries]

    def __len__(self) -> int:
        return len(self.boundaries)


@dataclass
class ForwardState:
    """Forward pass with per-block caches, ready for JVP/VJP traversals."""

    spec: NetworkSpec
    params: ParamSet
    aux: AuxScalars
    batch_size: int
    caches: list
    activations: BatchActivations

    def boundary(self, b: int) -> Array:
        return self.activations.boundaries[b]


def _bn_axes(ndim: int) -> tuple[int, ...]:
    return (0,) if ndim == 2 else (0, 2, 3)


def _vec_shaped(vec: Array, ndim: int) -> Array:
    # broadcastable view of a feature vector against [B, ...] activations
    if ndim in (2, 3):
        return vec
    return vec[:, None, None]


def _im2col(x: Array, k: int, stride: int, padding: int) -> Array:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                       # [B, C, Ho, Wo, k, k]
    b, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * k * k)


def _col2im(cols: Array, x_shape: tuple[int, ...], k: int, stride: int, padding: int) -> Array:
    b, c, h, w = x_shape
    ho, wo = cols.shape[1], cols.shape[2]
    g6 = cols.reshape(b, ho, wo, c, k, k)
    out = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                g6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return out


def _patchify(x: Array, p: int) -> Array:
    b, c, h, w = x.shape
    hp, wp = h // p, w // p
    x6 = x.reshape(b, c, hp, p, wp, p).transpose(0, 2, 4, 1, 3, 5)
    return x6.reshape(b, hp * wp, c * p * p)


def _unpatchify(g: Array, x_shape: tuple[int, ...], p: int) -> Array:
    b, c, h, w = x_shape
    hp, wp = h // p, w // p
    g6 = g.reshape(b, hp, wp, c, p, p).transpose(0, 3, 1, 4, 2, 5)
    return g6.reshape(b, c, h, w)


def _forward_block(blk: BlockSpec, p: dict, a_of, x: Array, skip: list):
    """Returns (output, cache); cache holds whatever JVP/VJP need later."""
    kind = blk.kind
    if kind == "dense":
        w = a_of("W") * p["W"]
        b = a_of("b") * p["b"]
        if blk.axis == -1:
            y = x @ w.T + b
        else:
            y = np.einsum("bpd,qp->bqd", x, w) + b[None, :, None]
        return y, ("dense", w, blk.axis, x)
    if kind == "conv2d":
        w = a_of("W") * p["W"]
        b = a_of("b") * p["b"]
        wmat = w.reshape(blk.fan_out, -1)
        cols = _im2col(x, blk.kernel, blk.stride, blk.padding)
        y = (cols @ wmat.T + b).transpose(0, 3, 1, 2)
        return y, ("conv2d", wmat, x.shape, cols)
    if kind == "activation":
        f, df = ACTIVATIONS[blk.act]
        return f(x), ("elw", df(x))
    if kind == "batchnorm":
        axes = _bn_axes(x.ndim)
        m = x.mean(axis=axes, keepdims=True)
        c = x - m
        v = (c * c).mean(axis=axes, keepdims=True)
        s = np.sqrt(v + blk.eps_bn)
        return c / s, ("batchnorm", c, s)
    if kind == "affine":
        al = _vec_shaped(a_of("alpha") * p["alpha"], x.ndim)
        be = _vec_shaped(a_of("beta") * p["beta"], x.ndim)
        return al * x + be, ("scale", al)
    if kind == "layerscale":
        e = _vec_shaped(a_of("scale") * p["scale"], x.ndim)
        return e * x, ("scale", e)
    if kind == "res_open":
        skip.append(x)
        return x, ("res_open",)
    if kind == "res_close":
        return x + blk.mu * skip.pop(), ("res_close", blk.mu)
    if kind == "flatten":
        return flatten_batch(x), ("reshape", x.shape)
    if kind == "avgpool":
        axes = (1,) if x.ndim == 3 else (2, 3)
        return x.mean(axis=axes), ("avgpool", x.shape, axes)
    if kind == "patchembed":
        w = a_of("W") * p["W"]
        b = a_of("b") * p["b"]
        pats = _patchify(x, blk.patch)
        return pats @ w.T + b, ("patchembed", w, x.shape, pats)
    raise ValueError(f"unknown block kind {kind!r}")


def run_network(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array) -> ForwardState:
    """Forward pass recording boundary activations and per-block caches."""
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ValueError(f"batch shape {x.shape[1:]} != network input {spec.input_shape}")
    bsz = x.shape[0]
    if bsz < 1:
        raise ValueError("batch must contain at least one sample")
    if bsz < 2 and spec.has_batchnorm:
        raise ValueError("batch normalization needs a batch of at least 2 samples")
    cutset = set(spec.cuts)
    bounds: list[Array] = []
    if 0 in cutset:
        bounds.append(flatten_batch(x))
    caches = []
    skip: list[Array] = []
    for i, blk in enumerate(spec.blocks):
        a_of = lambda g, i=i: aux.get(i, g)
        x, cache = _forward_block(blk, params[i], a_of, x, skip)
        caches.append(cache)
        if (i + 1) in cutset:
            bounds.append(flatten_batch(x))
    acts = BatchActivations(bounds, bsz)
    return ForwardState(spec, params, aux, bsz, caches, acts)


def forward(spec: NetworkSpec, params: ParamSet, aux: AuxScalars, batch: Array) -> BatchActivations:
    """Flattened activations at every measurement boundary."""
    return run_network(spec, params, aux, batch).activations


def normalize_unit_second_moment(x: Array) -> Array:
    """Scale each sample so its mean squared entry is 1 (zero samples pass through)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(x.shape[0], -1)
    norms = np.sqrt((flat * flat).mean(axis=1))
    norms = np.where(norms == 0.0, 1.0, norms)
    return x / norms.reshape((-1,) + (1,) * (x.ndim - 1))


# --------------------------------------------------------------------------
# JVP / VJP traversals (stack-first arrays [S, B, ...])
# --------------------------------------------------------------------------

def _fold(t: Array) -> tuple[Array, int]:
    return t.reshape(t.shape[0] * t.shape[1], *t.shape[2:]), t.shape[0]


def _unfold(t: Array, s: int) -> Array:
    return t.reshape(s, t.shape[0] // s, *t.shape[1:])


def _bn_tangent(t: Array, c: Array, s: Array) -> Array:
    # shared by JVP and VJP: the batch-normalization Jacobian is symmetric
    axes = tuple(a + 1 for a in _bn_axes(c.ndim))
    tm = t.mean(axis=axes, keepdims=True)
    proj = (t * c[None]).mean(axis=axes, keepdims=True)
    return (t - tm) / s[None] - c[None] * proj / s[None] ** 3


def _jvp_block(blk: BlockSpec, cache, t: Array, tskip: list) -> Array:
    tag = cache[0]
    if tag == "dense":
        _, w, axis, _ = cache
        f, s = _fold(t)
        out = f @ w.T if axis == -1 else np.einsum("bpd,qp->bqd", f, w)
        return _unfold(out, s)
    if tag == "conv2d":
        _, wmat, x_shape, _ = cache
        f, s = _fold(t)
        cols = _im2col(f, blk.kernel, blk.stride, blk.padding)
        return _unfold((cols @ wmat.T).transpose(0, 3, 1, 2), s)
    if tag == "elw":
        return t * cache[1][None]
    if tag == "batchnorm":
        return _bn_tangent(t, cache[1], cache[2])
    if tag == "scale":
        return t * cache[1]
    if tag == "res_open":
        tskip.append(t)
        return t
    if tag == "res_close":
        return t + cache[1] * tskip.pop()
    if tag == "reshape":
        return t.reshape(t.shape[0], t.shape[1], -1)
    if tag == "avgpool":
        _, x_shape, axes = cache
        return t.mean(axis=tuple(a + 1 for a in axes))
    if tag == "patchembed":
        _, w, x_shape, _ = cache
        f, s = _fold(t)
        return _unfold(_patchify(f, blk.patch) @ w.T, s)
    raise ValueError(f"bad cache tag {tag!r}")


def _vjp_block(blk: BlockSpec, cache, g: Array, gskip: list) -> Array:
    tag = cache[0]
    if tag == "dense":
        _, w, axis, _ = cache
        f, s = _fold(g)
        out = f @ w if axis == -1 else np.einsum("bqd,qp->bpd", f, w)
        return _unfold(out, s)
    if tag == "conv2d":
        _, wmat, x_shape, _ = cache
        f, s = _fold(g)
        gcols = f.transpose(0, 2, 3, 1) @ wmat
        folded_shape = (f.shape[0],) + x_shape[1:]
        return _unfold(_col2im(gcols, folded_shape, blk.kernel, blk.stride, blk.padding), s)
    if tag == "elw":
        return g * cache[1][None]
    if tag == "batchnorm":
        return _bn_tangent(g, cache[1], cache[2])
    if tag == "scale":
        return g * cache[1]
    if tag == "res_open":
        return g + gskip.pop()
    if tag == "res_close":
        gskip.append(cache[1] * g)
        return g
    if tag == "reshape":
        _, x_shape = cache
        return g.reshape(g.shape[0], *x_shape)
    if tag == "avgpool":
        _, x_shape, axes = cache
        n = int(np.prod([x_shape[a] for a in axes]))
        out = g / n
        for a in axes:
            out = np.expand_dims(out, a + 1)
        return np.broadcast_to(out, (g.shape[0],) + x_shape).copy()
    if tag == "patchembed":
        _, w, x_shape, _ = cache
        f, s = _fold(g)
        folded_shape = (f.shape[0],) + x_shape[1:]
        return _unfold(_unpatchify(f @ w, folded_shape, blk.patch), s)
    raise ValueError(f"bad cache tag {tag!r}")


def jvp_segment(state: ForwardState, b0: int, b1: int, tangent: Array) -> Array:
    """Push ``[S, B, N_b0]`` tangents forward from boundary b0 to b1."""
    spec = state.spec
    seg = spec.segment(b0, b1)
    t = np.asarray(tangent, dtype=np.float64)
    t = t.reshape(t.shape[0], t.shape[1], *spec.boundary_shape(b0))
    tskip: list[Array] = []
    for i in seg:
        t = _jvp_block(spec.blocks[i], state.caches[i], t, tskip)
    return t.reshape(t.shape[0], t.shape[1], -1)


def vjp_segment(state: ForwardState, b0: int, b1: int, cotangent: Array) -> Array:
    """Pull ``[S, B, N_b1]`` cotangents back from boundary b1 to b0."""
    spec = state.spec
    seg = spec.segment(b0, b1)
    g = np.asarray(cotangent, dtype=np.float64)
    g = g.reshape(g.shape[0], g.shape[1], *spec.boundary_shape(b1))
    gskip: list[Array] = []
    for i in reversed(seg):
        g = _vjp_block(spec.blocks[i], state.caches[i], g, gskip)
    return g.reshape(g.shape[0], g.shape[1], -1)


def vjp_params(state: ForwardState, cotangent: Array) -> dict[tuple[int, str], Array]:
    """Gradients of <cotangent, output> w.r.t. the base parameters.

    ``cotangent`` has the shape of the final boundary ``[B, N_out]``. Used
    by trainability probes; covers the parameterized block kinds.
    """
    spec = state.spec
    g = np.asarray(cotangent, dtype=np.float64)[None]
    g = g.reshape(1, g.shape[1], *spec.boundary_shape(spec.n_boundaries - 1))
    grads: dict[tuple[int, str], Array] = {}
    gskip: list[Array] = []
    for i in reversed(range(len(spec.blocks))):
        blk, cache = spec.blocks[i], state.caches[i]
        if cache[0] == "dense":
            _, w, axis, x = cache
            gb = g[0]
            aw, ab = state.aux.get(i, "W"), state.aux.get(i, "b")
            if axis == -1:
                gf = gb.reshape(-1, gb.shape[-1])
                xf = x.reshape(-1, x.shape[-1])
                grads[(i, "W")] = aw * (gf.T @ xf)
                grads[(i, "b")] = ab * gf.sum(axis=0)
            else:
                grads[(i, "W")] = aw * np.einsum("bqd,bpd->qp", gb, x)
                grads[(i, "b")] = ab * gb.sum(axis=(0, 2))
        elif cache[0] == "conv2d":
            _, wmat, x_shape, cols = cache
            gb = g[0].transpose(0, 2, 3, 1)
            aw, ab = state.aux.get(i, "W"), state.aux.get(i, "b")
            gw = np.einsum("bhwo,bhwc->oc", gb, cols)
            grads[(i, "W")] = aw * gw.reshape(blk.fan_out, blk.fan_in, blk.kernel, blk.kernel)
            grads[(i, "b")] = ab * gb.sum(axis=(0, 1, 2))
        elif cache[0] == "patchembed":
            _, w, x_shape, pats = cache
            aw, ab = state.aux.get(i, "W"), state.aux.get(i, "b")
            grads[(i, "W")] = aw * np.einsum("bpd,bpc->dc", g[0], pats)
            grads[(i, "b")] = ab * g[0].sum(axis=(0, 1))
        g = _vjp_block(blk, cache, g, gskip)
    return grads
