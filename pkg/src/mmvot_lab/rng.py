"""splitmix64-seeded xoshiro256** generator with keyed stream splitting.

Pure-Python integer arithmetic, so every stream is bit-identical on any
platform. Streams are derived from a root seed plus a tuple of labels,
e.g. ``Xoshiro256.stream(seed, "stage", 2, "batches")``.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * math.pi


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(output, new_state)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def derive_seed(seed: int, *labels: object) -> int:
    """Stable 64-bit key for ``(seed, *labels)``; labels may be str or int."""
    text = repr((int(seed) & MASK64,) + tuple(labels)).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class Xoshiro256:
    """xoshiro256** 1.0. State is four 64-bit words, never all zero."""

    __slots__ = ("s0", "s1", "s2", "s3", "_spare")

    def __init__(self, seed: int = 0, *, state: tuple[int, int, int, int] | None = None):
        if state is None:
            sm = int(seed) & MASK64
            words = []
            for _ in range(4):
                out, sm = splitmix64(sm)
                words.append(out)
            state = tuple(words)
        if not any(state):
            raise ValueError("xoshiro256** state must not be all zero")
        self.s0, self.s1, self.s2, self.s3 = (int(w) & MASK64 for w in state)
        self._spare: float | None = None

    @classmethod
    def stream(cls, seed: int, *labels: object) -> Xoshiro256:
        return cls(derive_seed(seed, *labels))

    @property
    def state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) (Lemire multiply-shift with rejection)."""
        if n <= 0:
            raise ValueError("n must be positive")
        m = self.next_u64() * n
        low = m & MASK64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next_u64() * n
                low = m & MASK64
        return m >> 64

    def normal(self) -> float:
        """Standard normal via Box-Muller; the second variate is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare = radius * math.sin(_TWO_PI * u2)
        return radius * math.cos(_TWO_PI * u2)

    def normals(self, shape: int | tuple[int, ...]) -> np.ndarray:
        size = int(np.prod(shape))
        out = np.fromiter((self.normal() for _ in range(size)), dtype=np.float64, count=size)
        return out.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        items = list(range(n))
        below = self.below
        for i in range(n - 1, 0, -1):
            j = below(i + 1)
            items[i], items[j] = items[j], items[i]
        return np.asarray(items, dtype=np.int64)
