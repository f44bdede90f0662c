"""Splitmix64 run PRNG with hierarchical stream derivation.

Every random decision in a run (data generation, parameter init, batch
shuffling, random negatives, validation negatives) draws from a stream derived
from the run seed by a key path such as ``("epoch", 3, "shuffle")``.  Deriving
a child never consumes state from its parent, so streams are independent of
the order in which they are used.
"""
from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """Splitmix64 output finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _key_to_int(key: int | str) -> int:
    if isinstance(key, bool):
        raise TypeError("stream keys must be int or str")
    if isinstance(key, int):
        return key & MASK64
    # FNV-1a over UTF-8 bytes
    h = _FNV_OFFSET
    for byte in key.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *path: int | str) -> int:
    h = seed & MASK64
    for key in path:
        h = mix64((h + GOLDEN_GAMMA) & MASK64 ^ _key_to_int(key))
    return h


class SplitMix64:
    """Splitmix64 generator.

    >>> SplitMix64(0).next_u64()
    16294208416658607535
    """

    __slots__ = ("seed", "state")

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = self.seed

    def child(self, *path: int | str) -> SplitMix64:
        return SplitMix64(derive_seed(self.seed, *path))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Integer in [0, n) by multiply-shift on a 64-bit draw."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def randint(self, low: int, high: int) -> int:
        """Integer in the closed interval [low, high]."""
        return low + self.randbelow(high - low + 1)

    def normal(self) -> float:
        # Box-Muller, cosine branch only; u1 in (0, 1]
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def choice_excluding(self, n: int, excluded: int) -> int:
        """Uniform draw from {0..n-1} minus ``excluded``."""
        r = self.randbelow(n - 1)
        return r + 1 if r >= excluded else r
