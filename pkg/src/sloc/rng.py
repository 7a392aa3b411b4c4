"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by
``(seed, purpose, index...)``, so draws never depend on how work is
scheduled across threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# purpose tags
CHANNEL = 1
ERASURE = 2
PATH = 3
PATH_X = 4
MEASURE = 5
LAW = 6
TAU = 7

_MASK64 = (1 << 64) - 1


def stream(seed: int, purpose: int, *index: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit seed is required")
    key = [int(seed) & _MASK64, int(purpose), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def fan_out(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, results in item order regardless of ``threads``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
