"""Named random streams derived from one integer seed.

Each stream is keyed by ``(seed, tag, *indices)`` with a distinct nonzero
tag, so streams never coincide (SeedSequence pads keys with zeros, which
makes ``[s]`` and ``[s, 0]`` identical; the tag sits before any index).
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

PR = 1
QR = 2
NOISE = 11
VALIDATION = 12
BETA = 13
DESIGN = 14
FOLDS = 15


def stream(seed: int, tag: int, *indices: int) -> np.random.Generator:
    key = [int(seed), int(tag), *(int(i) for i in indices)]
    if any(k < 0 for k in key):
        raise DomainError("seeds and stream indices must be nonnegative integers")
    return np.random.default_rng(key)
