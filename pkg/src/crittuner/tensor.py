"""Dense float64 tensors and counter-based seeded Gaussian sampling.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order; every
routine in this package produces and expects float64. Randomness flows
through :class:`RngStream`, a thin wrapper over numpy's counter-based
Philox bit generator: two streams with the same ``(seed, stream_id)`` yield
bit-identical draw sequences on any platform, and distinct stream ids give
statistically independent streams. Grid scans exploit this by assigning
``stream_id = grid index`` to each point.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

Array = np.ndarray

_U64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """One round of splitmix64; mixes ids so derived streams never collide."""
    x = (x + _GOLDEN) & _U64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return (z ^ (z >> 31)) & _U64


class RngStream:
    """Seedable, splittable random stream with a monotone draw counter.

    ``seed`` identifies the experiment, ``stream_id`` the lane within it.
    ``child(tag)`` derives an independent lane deterministically, so worker
    pools can be given disjoint streams up front and results do not depend
    on scheduling. Each stream instance must be used by one worker at a
    time.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _U64
        self.stream_id = int(stream_id) & _U64
        self.counter = 0
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed, _splitmix64(self.stream_id)])
        )

    def child(self, tag: int) -> "RngStream":
        """Derive an independent stream; same (seed, id, tag) -> same stream."""
        mixed = _splitmix64(self.stream_id ^ _splitmix64(int(tag) & _U64))
        return RngStream(self.seed, mixed)

    def split(self, n: int) -> list["RngStream"]:
        """n independent child streams, e.g. one per parallel worker."""
        return [self.child(i + 1) for i in range(n)]

    def normal(self, shape: Sequence[int] | int, mean: float = 0.0, std: float = 1.0) -> Array:
        if std < 0:
            raise ValueError(f"standard deviation must be >= 0, got {std}")
        shape = (shape,) if isinstance(shape, int) else tuple(int(s) for s in shape)
        self.counter += int(np.prod(shape)) if shape else 1
        out = self._gen.normal(loc=mean, scale=std, size=shape)
        return np.asarray(out, dtype=np.float64)

    def integers(self, low: int, high: int, size: int | None = None):
        self.counter += 1 if size is None else int(size)
        return self._gen.integers(low, high, size=size)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


def gaussian(shape: Sequence[int] | int, mean: float, std: float, rng: RngStream) -> Array:
    """iid N(mean, std^2) tensor; deterministic per stream, std=0 allowed."""
    return rng.normal(shape, mean, std)


def flatten(t: Array) -> Array:
    """Merge all axes into one, preserving row-major data order."""
    return np.ascontiguousarray(t).reshape(-1)


def flatten_batch(t: Array) -> Array:
    """Flatten all but the leading (batch) axis: [B, ...] -> [B, N]."""
    return np.ascontiguousarray(t).reshape(t.shape[0], -1)


def assert_finite(t: Array, what: str = "tensor") -> Array:
    if not np.all(np.isfinite(t)):
        raise FloatingPointError(f"{what} contains non-finite values")
    return t


def prod(shape: Iterable[int]) -> int:
    return int(math.prod(shape))
