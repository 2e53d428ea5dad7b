"""Seeded RNG substreams and an order-preserving parallel map.

Every piece of randomness in the toolkit flows from one top-level seed
through named substreams, so results are identical no matter how work is
scheduled across processes.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the (seed, name) substream.

    The stream depends only on the pair, not on call order, so components
    can draw independently without contaminating each other.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Map fn over items, optionally across processes, preserving order.

    Results are reduced in item order regardless of completion order, so a
    run with jobs=N is indistinguishable from jobs=1 provided fn is pure.
    fn must be picklable (a module-level function or functools.partial).
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
