"""Ready-made network builders used by demos, verification suites and tests."""

from __future__ import annotations

from typing import Sequence

from .blocks import (
    BlockSpec,
    NetworkSpec,
    activation,
    affine_norm,
    avg_pool,
    batchnorm,
    conv2d,
    dense,
    layer_scale,
    patch_embed,
    residual_close,
    residual_open,
)


def mlp(depth: int, width: int, sigma_w: float, sigma_b: float = 0.0, *,
        act: str = "relu", in_dim: int | None = None) -> NetworkSpec:
    """Stack of ``depth`` dense+activation groups, one boundary per group."""
    in_dim = width if in_dim is None else in_dim
    blocks: list[BlockSpec] = []
    for _ in range(depth):
        blocks.append(dense(width, sigma_w, sigma_b))
        blocks.append(activation(act, boundary=True))
    return NetworkSpec(tuple(blocks), (in_dim,))


def relu_mlp(depth: int, width: int, sigma_w: float, sigma_b: float = 0.0, *,
             in_dim: int | None = None) -> NetworkSpec:
    return mlp(depth, width, sigma_w, sigma_b, act="relu", in_dim=in_dim)


def linear_mlp(depth: int, width: int, sigma_w: float, sigma_b: float = 0.0, *,
               in_dim: int | None = None) -> NetworkSpec:
    return mlp(depth, width, sigma_w, sigma_b, act="linear", in_dim=in_dim)


def prebn_residual_mlp(depth: int, width: int, sigma_w: float, sigma_b: float = 0.0,
                       mu: float = 1.0, *, in_dim: int | None = None,
                       eps_bn: float = 1e-5) -> NetworkSpec:
    """Residual MLP normalizing the carried signal before each dense branch.

    Each group computes ``W phi(BN(h)) + b + mu h`` with a boundary on the
    group output, so boundary activations are the residual-stream values.
    """
    in_dim = width if in_dim is None else in_dim
    blocks: list[BlockSpec] = []
    for _ in range(depth):
        blocks.extend([
            residual_open(),
            batchnorm(eps_bn),
            activation("relu"),
            dense(width, sigma_w, sigma_b),
            residual_close(mu, boundary=True),
        ])
    return NetworkSpec(tuple(blocks), (in_dim,))


def conv_bn_relu_stack(channels: Sequence[int], sigma_w: float, sigma_b: float = 0.0, *,
                       image: tuple[int, int, int] = (3, 8, 8), kernel: int = 3,
                       eps_bn: float = 1e-5) -> NetworkSpec:
    """Miniature pre-activation conv stack: Conv - BN - affine - ReLU per group.

    The affine vector after each normalization is the natural tuning handle,
    since normalization absorbs any rescaling of the convolution weights.
    """
    blocks: list[BlockSpec] = []
    for c in channels:
        blocks.extend([
            conv2d(c, kernel, sigma_w, sigma_b, padding=kernel // 2),
            batchnorm(eps_bn),
            affine_norm(),
            activation("relu", boundary=True),
        ])
    return NetworkSpec(tuple(blocks), tuple(image))


def resmlp_toy(n_blocks: int, dim: int, sigma_w: float, sigma_b: float = 0.0, *,
               mu: float = 1.0, eps_ls: float = 0.1, act: str = "gelu",
               image: tuple[int, int, int] = (3, 16, 16), patch: int = 4,
               hidden_mult: int = 4, with_head: bool = False) -> NetworkSpec:
    """Desk-scale patch-mixing residual MLP.

    Per block: elementwise affine, patch-mixing dense inside a scaled
    residual branch, then a second affine plus channel MLP (dim ->
    hidden_mult*dim -> dim) inside another scaled branch. Skips are carried
    at strength ``mu``; branches start at scale ``eps_ls``. Boundaries sit
    on the patch embedding and on every block output.
    """
    c, h, w = image
    if h % patch or w % patch:
        raise ValueError(f"patch {patch} does not tile image {image}")
    n_patches = (h // patch) * (w // patch)
    blocks: list[BlockSpec] = [patch_embed(patch, dim, sigma_w, sigma_b, boundary=True)]
    for _ in range(n_blocks):
        blocks.extend([
            affine_norm(),
            residual_open(),
            dense(n_patches, sigma_w, sigma_b, axis=1),
            layer_scale(eps_ls),
            residual_close(mu),
            residual_open(),
            affine_norm(),
            dense(hidden_mult * dim, sigma_w, sigma_b),
            activation(act),
            dense(dim, sigma_w, sigma_b),
            layer_scale(eps_ls),
            residual_close(mu, boundary=True),
        ])
    if with_head:
        blocks.append(avg_pool())
        blocks.append(dense(10, sigma_w, sigma_b, boundary=True))
    return NetworkSpec(tuple(blocks), (c, h, w))
