"""Seeded random streams.

A stream is identified by ``(seed, stream_id)``; the same pair always yields
the same draw sequence. Streams are independent of the order in which other
streams are consumed, so work split by skeleton id stays reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    def __init__(self, seed: int, stream_id: int | tuple[int, ...] = 0):
        key = stream_id if isinstance(stream_id, tuple) else (stream_id,)
        self.seed = int(seed) & _MASK64
        self.stream_id = tuple(int(k) & _MASK64 for k in key)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self.stream_id])))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *key: int) -> "RngStream":
        """Independent sub-stream keyed by ``key`` (does not consume draws here)."""
        return RngStream(self.seed, self.stream_id + tuple(key))

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, shape=()) -> np.ndarray:
        return self._gen.random(size=shape)

    def signs(self, shape=()) -> np.ndarray:
        return np.where(self._gen.random(size=shape) < 0.5, -1.0, 1.0)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)


def sample_gumbel_logistic(rng: RngStream, shape) -> np.ndarray:
    """Standard logistic noise, distributed as the difference of two Gumbel(0, 1) draws."""
    return rng._gen.logistic(0.0, 1.0, size=shape)
