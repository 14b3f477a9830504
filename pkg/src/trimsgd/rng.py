"""Portable seeded random streams.

Generator: xoshiro256** (Blackman & Vigna). Seeding: a 64-bit key is
expanded into the four state words by four successive splitmix64 outputs.

Named streams let one trial seed feed independent consumers. The key for
``Rng(seed, "noise", 3)`` is built as::

    key = seed mod 2**64
    for part in ("noise", 3):
        key = mix64(key ^ tag(part))

where ``mix64`` is the splitmix64 finalizer, ``tag(int)`` is the integer
mod 2**64 and ``tag(str)`` is 64-bit FNV-1a over its UTF-8 bytes.

Derived draws:

* uniform double: ``(u64 >> 11) * 2**-53``, in [0, 1)
* integer in [0, n): raw u64 values below ``2**64 mod n`` are rejected, the
  rest reduced ``mod n``
* permutation: Fisher-Yates from the last position down, ``j = int(i + 1)``
"""

import numpy as np

from trimsgd import kernels

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(x):
    """One splitmix64 step: returns ``(new_state, output)``."""
    x = (x + GOLDEN) & MASK64
    return x, mix64(x)


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def _tag(part):
    if isinstance(part, str):
        return fnv1a64(part)
    return int(part) & MASK64


def stream_key(seed, *parts):
    key = int(seed) & MASK64
    for part in parts:
        key = mix64(key ^ _tag(part))
    return key


class Rng:
    """xoshiro256** stream; ``Rng(seed, *parts)`` selects a named substream."""

    def __init__(self, seed=0, *parts):
        x = stream_key(seed, *parts)
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self.state = np.array(words, dtype=np.uint64)

    @classmethod
    def from_state(cls, words):
        rng = cls.__new__(cls)
        rng.state = np.array(words, dtype=np.uint64)
        if not rng.state.any():
            raise ValueError("xoshiro256** state must not be all zero")
        return rng

    def next_u64(self, count=1):
        return kernels.next_u64(self.state, count)

    def random(self, count):
        return kernels.fill_uniform(self.state, count)

    def integers(self, n, count):
        """``count`` uniform integers in ``[0, n)``."""
        if not 1 <= n <= 1 << 63:
            raise ValueError(f"n must lie in [1, 2**63], got {n}")
        return kernels.bounded_ints(self.state, n, count)

    def permutation(self, n):
        return kernels.permutation(self.state, n)

    def uniform(self, low, high, shape):
        count = int(np.prod(shape))
        return (low + (high - low) * self.random(count)).reshape(shape)
