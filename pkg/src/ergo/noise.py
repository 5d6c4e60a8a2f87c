"""Counter-based noise streams.

Every draw is keyed by ``(seed, channel)`` and addressed by ``(step, block)``,
where particles are grouped into fixed blocks of :data:`BLOCK` indices. A
particle's variates therefore depend only on the seed, the channel name, the
step index and the particle index, never on how blocks are scheduled across
threads.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["StepNoise", "BLOCK", "channel_id"]

BLOCK = 8192
_MASK64 = (1 << 64) - 1


def channel_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class StepNoise:
    """Noise source for one scheme step.

    Parameters
    ----------
    seed : int
        Run seed, ``0 <= seed < 2**64``.
    step : int
        Global step index, so continued runs reuse no variates.
    refine : int
        Number of Brownian sub-increments per step. The coarse increment is
        the sum of the fine ones, so coarse and refined models driven by the
        same ``StepNoise`` are synchronously coupled.
    workers : int
        Thread count for block generation; never changes the output.
    """

    def __init__(self, seed: int, step: int, refine: int = 1, workers: int = 1):
        seed = int(seed)
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must lie in [0, 2**64)")
        if step < 0:
            raise ValueError("step index must be >= 0")
        if refine < 1:
            raise ValueError("refine must be >= 1")
        self.seed = seed
        self.step = int(step)
        self.refine = int(refine)
        self.workers = max(1, int(workers))
        self._cache: dict = {}

    def generator(self, channel: str, block: int) -> np.random.Generator:
        bitgen = np.random.Philox(counter=[0, 0, int(block), self.step], key=[self.seed, channel_id(channel)])
        return np.random.Generator(bitgen)

    def per_block(self, channel: str, n: int, fn):
        """Apply ``fn(generator, lo, hi)`` to every particle block and return the list of results."""
        spans = [(b, b * BLOCK, min(n, (b + 1) * BLOCK)) for b in range(-(-n // BLOCK))]

        def run(span):
            b, lo, hi = span
            return fn(self.generator(channel, b), lo, hi)

        if self.workers > 1 and len(spans) > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                return list(ex.map(run, spans))
        return [run(s) for s in spans]

    def _draw(self, kind: str, channel: str, n: int, k: int) -> np.ndarray:
        key = (kind, channel, n, k)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if kind == "normal":
            parts = self.per_block(channel, n, lambda g, lo, hi: g.standard_normal((hi - lo, k)))
        else:
            parts = self.per_block(channel, n, lambda g, lo, hi: g.random((hi - lo, k)))
        out = np.concatenate(parts, axis=0) if parts else np.empty((0, k))
        out.setflags(write=False)
        self._cache[key] = out
        return out

    def normal(self, channel: str, n: int, k: int) -> np.ndarray:
        """Standard normals of shape ``(n, k)``."""
        return self._draw("normal", channel, n, k)

    def uniform(self, channel: str, n: int, k: int = 1) -> np.ndarray:
        """Uniforms on ``[0, 1)`` of shape ``(n, k)``."""
        return self._draw("uniform", channel, n, k)

    def brownian_fine(self, channel: str, n: int, dim: int, dt: float) -> np.ndarray:
        """Sub-increments of shape ``(refine, n, dim)``, each with variance ``dt/refine``."""
        z = self.normal(channel, n, self.refine * dim).reshape(n, self.refine, dim)
        return np.sqrt(dt / self.refine) * z.transpose(1, 0, 2)

    def brownian(self, channel: str, n: int, dim: int, dt: float) -> np.ndarray:
        """Increment ``B_t - B_s`` of shape ``(n, dim)``."""
        if self.refine == 1:
            return np.sqrt(dt) * self.normal(channel, n, dim)
        return self.brownian_fine(channel, n, dim, dt).sum(axis=0)
