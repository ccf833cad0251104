"""Counter-addressed random streams for shot-level reproducibility.

Shot ``k`` of an experiment draws its quantum payload from its own stream and
its herald flag from the block ``k // HERALD_BLOCK`` of the herald stream, so
any shot can be replayed on its own and results do not depend on how shots
are split across workers.
"""
from __future__ import annotations

import numpy as np

from .core import derived_rng

HERALD_BLOCK = 4096
_HERALD, _PAYLOAD = 0, 1


def herald_mask(seed: int, tag: tuple, start: int, count: int, prob: float) -> np.ndarray:
    """Herald flags for shots ``start .. start+count-1``."""
    if count <= 0:
        return np.zeros(0, dtype=bool)
    if prob >= 1.0:
        return np.ones(count, dtype=bool)
    first, last = start // HERALD_BLOCK, (start + count - 1) // HERALD_BLOCK
    draws = [derived_rng(seed, *tag, _HERALD, b).random(HERALD_BLOCK) for b in range(first, last + 1)]
    u = np.concatenate(draws)[start - first * HERALD_BLOCK:][:count]
    return u < prob


def shot_rng(seed: int, tag: tuple, shot: int) -> np.random.Generator:
    return derived_rng(seed, *tag, _PAYLOAD, shot)
