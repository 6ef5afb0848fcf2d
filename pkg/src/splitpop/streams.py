"""Reproducible per-replicate random streams.

Replicate r of horizon index h from simulator source src (0 = coalescent,
1 = forward oracle) under master seed s uses a Philox-4x64-10 counter-based
generator with the 128-bit key

    word0 = s mod 2^64
    word1 = src * 2^48 + h * 2^32 + r.

Every replicate owns an independent stream derived only from these indices,
so results cannot depend on scheduling or worker count, and any Philox
implementation keyed the same way reproduces the draws bit for bit.
"""

from __future__ import annotations

import numpy as np

__all__ = ["replicate_rng"]

SOURCE_COALESCENT = 0
SOURCE_FORWARD = 1


def replicate_rng(
    master_seed: int, horizon_index: int, replicate_index: int, source: int = SOURCE_COALESCENT
) -> np.random.Generator:
    if not 0 <= horizon_index < 2**16:
        raise ValueError("horizon_index out of range")
    if not 0 <= replicate_index < 2**32:
        raise ValueError("replicate_index out of range")
    if not 0 <= source < 2**16:
        raise ValueError("source out of range")
    key = np.array(
        [
            master_seed % 2**64,
            (source << 48) | (horizon_index << 32) | replicate_index,
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
