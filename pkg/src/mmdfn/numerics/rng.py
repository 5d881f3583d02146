"""Seeded random streams.

Draws come from numpy's Philox4x64-10 counter-based generator, whose output for
a given (seed, counter) is fixed by the algorithm rather than by the platform.
Named sub-streams are derived by hashing the stream name into the key, so
adding a new consumer never shifts the draws seen by existing ones.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _derive(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def stream(self, label: str) -> "Rng":
        return Rng(_derive(self.seed, label))

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(size) * scale

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
