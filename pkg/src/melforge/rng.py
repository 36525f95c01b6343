"""Counter-based random streams for reproducible pipelines.

Every stochastic operation in the package draws from a ``RandomStream``
keyed by a run seed plus a structured stream id (for example
``(epoch, item_index, "aug")``).  Streams are counter-based: draw ``i``
is a pure function of ``(seed, stream_id, i)``, so results never depend
on scheduling, thread count or the order in which streams are consumed.
The generator is a splitmix64 walk, exactly reproducible across
platforms and numpy versions.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TAG_INT = 0x3C79AC492BA7B653
_TAG_STR = 0x1C69B3F74AC4AE35


def _mix64(x: int) -> int:
    """splitmix64 finalizer; bijective on 64-bit words."""
    z = (x + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    z = (x + np.uint64(_GOLDEN)) & np.uint64(_M64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _hash_component(component) -> int:
    if isinstance(component, (bool, np.bool_)):
        raise TypeError("stream id components must be ints or strings, not bool")
    if isinstance(component, (int, np.integer)):
        return _mix64(_TAG_INT ^ (int(component) & _M64))
    if isinstance(component, str):
        h = 0xCBF29CE484222325  # FNV-1a over utf-8 bytes
        for byte in component.encode("utf-8"):
            h = ((h ^ byte) * 0x100000001B3) & _M64
        return _mix64(_TAG_STR ^ h)
    raise TypeError(f"unsupported stream id component: {component!r}")


def derive_key(seed: int, stream_id: tuple) -> int:
    """Mix a 64-bit seed with the stream id into a substream key.

    Components are absorbed in order, so ``(1, 2)`` and ``(2, 1)`` key
    different streams.
    """
    key = _mix64(int(seed) & _M64)
    for component in stream_id:
        key = _mix64(key ^ _hash_component(component))
    return key


class RandomStream:
    """Deterministic stream of draws identified by (seed, stream_id).

    Two streams constructed with the same seed and stream id produce the
    same sequence; streams with different ids are statistically
    independent regardless of interleaving.
    """

    def __init__(self, seed: int, stream_id: tuple = ()):
        self.seed = int(seed)
        self.stream_id = tuple(stream_id)
        self._key = derive_key(self.seed, self.stream_id)
        self._counter = 0

    def substream(self, *components) -> "RandomStream":
        """Child stream keyed by this stream's id extended by components."""
        return RandomStream(self.seed, self.stream_id + tuple(components))

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words, advancing the counter."""
        base = np.uint64(self._key)
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix64_array(base + idx * np.uint64(_GOLDEN))

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        """Uniform draws on [lo, hi); scalar when size is None."""
        if hi < lo:
            raise ValueError(f"uniform bounds out of order: lo={lo} hi={hi}")
        n = 1 if size is None else int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        out = lo + (hi - lo) * u
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def gaussian(self, mean: float = 0.0, sigma: float = 1.0, size=None):
        """Normal draws via Box-Muller; two uniforms are consumed per value."""
        if sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        n = 1 if size is None else int(np.prod(size))
        raw = self._raw(2 * n)
        # u1 in (0, 1] so log() is finite even when sigma == 0
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) / float(1 << 53)
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        out = mean + sigma * z
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def bernoulli(self, p: float) -> int:
        """One {0,1} draw with success probability p."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        return int(self.uniform(0.0, 1.0) < p)
