"""Counter-based SplitMix64 generator.

The stream is fully specified here so that scene generation is byte-stable
regardless of the numpy/Python version::

    x_i   = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64      (i = 0, 1, ...)
    z     = (x_i ^ (x_i >> 30)) * 0xBF58476D1CE4E5B9  mod 2**64
    z     = (z ^ (z >> 27))     * 0x94D049BB133111EB  mod 2**64
    out_i = z ^ (z >> 31)

Floats take the top 53 bits: ``(out >> 11) * 2**-53`` in [0, 1).
Bounded integers use the multiply-shift map ``(out * n) >> 64``.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class CounterRng:
    """Deterministic stream indexed by a 64-bit counter."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        self.counter += 1
        return splitmix64(self.seed + self.counter * GOLDEN_GAMMA)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def normal(self) -> float:
        # Box-Muller on two uniforms; the (0, 1] shift avoids log(0).
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
