"""Seedable, portable random number generation.

Everything that needs randomness (traffic generation, weight init,
training shuffles, negative sampling) draws from SplitMix64 so that a
given seed produces byte-identical output on any platform and any
numpy version.  SplitMix64 mixes a 64-bit counter through two
xor-shift/multiply rounds; outputs for counters k=1..n are independent
of each other, which also makes bulk generation a handful of vectorized
uint64 ops.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# float in [0, 1) from the top 53 bits of a u64
_INV_2_53 = 2.0 ** -53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Streaming scalar generator."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def random(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller; consumes exactly two uniforms per call."""
        u1 = self.random()
        u2 = self.random()
        if u1 <= 0.0:
            u1 = _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Integer in [0, n) via 128-bit multiply-shift (no modulo bias)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return (self.next_u64() * n) >> 64

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randint(len(seq))]

    def weighted_choice(self, seq, weights):
        total = float(sum(weights))
        x = self.random() * total
        acc = 0.0
        for item, w in zip(seq, weights):
            acc += w
            if x < acc:
                return item
        return seq[-1]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def fork(self) -> "SplitMix64":
        """Independent child stream (seeded from the parent's output)."""
        return SplitMix64(self.next_u64())


def fill_u64(seed: int, n: int) -> np.ndarray:
    """Vectorized SplitMix64: outputs for counters 1..n, dtype uint64."""
    if n < 0:
        raise ValueError("n must be non-negative")
    counters = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + counters * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def fill_uniform(seed: int, n: int) -> np.ndarray:
    """n uniform float64 in [0, 1), matching SplitMix64(seed) bit for bit."""
    return (fill_u64(seed, n) >> np.uint64(11)).astype(np.float64) * _INV_2_53


def fill_gauss(seed: int, n: int) -> np.ndarray:
    """n standard normals via Box-Muller over 2n uniforms."""
    u = fill_uniform(seed, 2 * n)
    u1 = np.maximum(u[0::2], _INV_2_53)
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def permutation(seed: int, n: int) -> np.ndarray:
    """Deterministic permutation of range(n)."""
    return np.argsort(fill_u64(seed, n), kind="stable")


def derive_seed(*parts: int) -> int:
    """Fold integers into a fresh 64-bit seed (independent sub-streams)."""
    h = _GOLDEN
    for p in parts:
        h = _mix(((h ^ (p & _MASK64)) + _GOLDEN) & _MASK64)
    return h
