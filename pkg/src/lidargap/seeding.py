"""Deterministic RNG plumbing: one root seed, stable per-frame child seeds."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, key: str) -> int:
    """Stable 64-bit child seed from a root seed and a string key.

    Hash-based so frames can be processed in any order or in parallel and
    still see the same stream.
    """
    digest = hashlib.blake2b(f"{root}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    """Generator with an explicitly pinned bit stream (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))
