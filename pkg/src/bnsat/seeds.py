"""Deterministic seed derivation and a portable 64-bit PRNG.

All randomness in the package flows from a single master seed.  Stage- and
try-local seeds are derived with SHA-256 so the derivation is stable across
platforms and Python versions.  The local search uses SplitMix64, a tiny
integer generator that can be reimplemented bit-for-bit in compiled code.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1


def derive_seed(master: int, *tags: int | str) -> int:
    """Derive a 64-bit seed from a master seed and a sequence of tags."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


class SplitMix64:
    """SplitMix64 stream (Steele, Lea & Flood).  64-bit state, period 2^64.

    The compiled solver kernel implements the identical update, so Python
    and compiled search paths consume the same random stream.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by modulo (bias < n/2**64, negligible here)."""
        return self.next_u64() % n

    def chance(self, num: int, den: int) -> bool:
        """True with probability num/den, decided on integers only."""
        return self.next_u64() % den < num
