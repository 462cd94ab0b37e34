"""Portable seeded random numbers.

Instance generation must reproduce bit-for-bit from a seed on any platform and
in any language, so it does not go through :mod:`random` or numpy (whose
bounded-integer and float algorithms are implementation details). The stream is
SplitMix64:

    state += 0x9E3779B97F4A7C15                      (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9         (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB         (mod 2**64)
    return z ^ (z >> 31)

Derived draws:

* ``below(n)``: rejection sampling. ``limit = 2**64 - (2**64 % n)``; draw until
  ``x < limit`` and return ``x % n``.
* ``uniform()``: ``(next() >> 11) * 2**-53``, a double in ``[0, 1)``.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.state = seed

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def between(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def sample_pair(self, n: int) -> tuple[int, int]:
        """Two distinct indices in ``[0, n)``, in draw order."""
        a = self.below(n)
        b = self.below(n - 1)
        if b >= a:
            b += 1
        return a, b
