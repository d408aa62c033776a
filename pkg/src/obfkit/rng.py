"""Counter-based random numbers.

Every draw is a pure function of integer keys, so a value never depends on
how many other draws happened before it or in which order users are
evaluated.  The mixer is SplitMix64's finalizer, applied element-wise on
uint64 arrays.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(GOLDEN)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))
_UNIT = 1.0 / (1 << 53)


def mix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.uint64)
    z = arr.reshape(-1) + _GOLDEN
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    z ^= z >> _S31
    return z.reshape(arr.shape) if arr.ndim else z[0]


def unit(x) -> np.ndarray:
    """Map uint64 keys to floats in [0, 1)."""
    return (mix(x) >> _S11).astype(np.float64) * _UNIT


def combine(*parts) -> np.ndarray:
    """Fold integer keys (scalars or broadcastable arrays) into one key."""
    acc = np.uint64(0)
    for p in parts:
        acc = mix(acc ^ np.asarray(p, dtype=np.uint64))
    return acc


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(*parts) -> int:
    """Derive a non-negative 63-bit seed from ints and strings."""
    keys = [p if isinstance(p, (int, np.integer)) else stable_hash(str(p)) for p in parts]
    return int(combine(*[int(k) & MASK for k in keys])) >> 1
