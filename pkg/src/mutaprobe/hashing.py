"""Deterministic hashing and counter-based random draws.

Seeds derive from FNV-1a 64 over stable key strings; per-seed draws come
from a SplitMix64 counter stream so draw i is a pure function of
(seed, i) and can be evaluated for millions of seeds at once with numpy.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

_MASK64 = (1 << 64) - 1

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def splitmix64(x: int) -> int:
    """Finalizer of the SplitMix64 generator (Steele et al.)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def counter_rand(seed: int, counter: int) -> int:
    """Draw ``counter`` of the stream keyed by ``seed``, as a uint64."""
    return splitmix64((seed + (counter + 1) * _SPLITMIX_GAMMA) & _MASK64)


def rand_below(seed: int, counter: int, n: int) -> int:
    """Uniform integer in [0, n). Modulo bias over 2^64 is negligible for small n."""
    if n <= 0:
        raise ValueError("n must be positive")
    return counter_rand(seed, counter) % n


def counter_rand_vec(seeds: np.ndarray, counter: int) -> np.ndarray:
    """Vectorized ``counter_rand`` over a uint64 array of seeds."""
    with np.errstate(over="ignore"):
        z = seeds + np.uint64((counter + 1) * _SPLITMIX_GAMMA & _MASK64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
