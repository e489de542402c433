"""Deterministic 64-bit seed derivation (SplitMix64 finalizer).

Child seeds depend only on the parent seed and the integer path, never on
execution order, so parallel work reproduces serial results bit for bit.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, *path):
    """Child seed for ``seed`` along an integer ``path``, e.g. ``(epoch, column)``."""
    h = mix64(int(seed) & MASK64)
    for part in path:
        h = mix64(h ^ mix64(int(part) & MASK64))
    return h


def numpy_rng(seed, *path):
    return np.random.default_rng(derive_seed(seed, *path))
