"""Named, seeded random streams.

Two generators are used and both are fixed for replay stability:

* numpy ``PCG64`` seeded through ``SeedSequence(seed, spawn_key=(crc32(name), *keys))``
  for bulk draws (cost matrices, random test instances);
* a SHA-256 counter stream for leader elections, so a single draw at block
  height ``h`` never depends on how many draws happened before it.
"""

from __future__ import annotations

import hashlib
import struct
import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MASK:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for the sub-stream ``name`` (plus integer keys)."""
    spawn_key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed), spawn_key=spawn_key)))


def hashed_uniform(seed: int, name: str, counter: int) -> float:
    """Uniform in [0, 1) from SHA-256 of ``(seed, name, counter)``."""
    digest = hashlib.sha256(
        struct.pack(">QQ", check_seed(seed), counter & SEED_MASK) + name.encode("utf-8")
    ).digest()
    return (int.from_bytes(digest[:8], "big") >> 11) * _INV_2_53


def hashed_uniforms(seed: int, name: str, start: int, count: int) -> np.ndarray:
    return np.fromiter(
        (hashed_uniform(seed, name, start + i) for i in range(count)), dtype=np.float64, count=count
    )
