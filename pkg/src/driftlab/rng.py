"""Splittable, order-free random streams.

Every simulated path owns a Philox counter-based generator keyed by
``(base_seed, path_index)``; its k-th block of ``d`` standard normals drives
step k.  Paths therefore never share state and can be generated in any order
or chunking with bit-identical results.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def path_generator(base_seed: int, path_index: int) -> np.random.Generator:
    """Generator for one path; injective in ``(base_seed, path_index)``."""
    if base_seed < 0 or path_index < 0:
        raise ValueError("seed and path index must be nonnegative")
    key = np.array([base_seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(base_seed: int, *labels) -> int:
    """Deterministic child seed for a named sub-experiment."""
    words = [int(base_seed) & 0xFFFFFFFF, (int(base_seed) >> 32) & 0xFFFFFFFF]
    for lab in labels:
        words.append(zlib.crc32(repr(lab).encode("utf-8")))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def auxiliary_generator(base_seed: int, *labels) -> np.random.Generator:
    """Generator for non-path randomness (volume sampling, random test data)."""
    return np.random.Generator(np.random.Philox(key=derive_seed(base_seed, "aux", *labels)))
