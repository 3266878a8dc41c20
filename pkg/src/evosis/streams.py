"""Counter-based random streams and deterministic replica parallelism.

Every stream is a Philox generator keyed by the 64-bit master seed. Its
starting counter is ``[0, replica, tag, sub]``. Streams with different
``(replica, tag, sub)`` therefore start 2**64 blocks apart, so results depend
only on the seed and the indices and never on thread scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

MASK64 = (1 << 64) - 1

TAG_DEFAULT = 0
TAG_DUALITY_ALL = 1
TAG_DUALITY_SEED = 2
TAG_STAR = 3
TAG_SWEEP = 4
TAG_EXTINCTION = 5
TAG_STATIONARITY = 6


def make_rng(master_seed: int, replica: int = 0, tag: int = 0, sub: int = 0) -> np.random.Generator:
    counter = np.array([0, replica & MASK64, tag & MASK64, sub & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=int(master_seed) & MASK64, counter=counter))


def default_threads() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[int], T], n: int, threads: int | None = None) -> list[T]:
    """Evaluate ``fn(0..n-1)`` on a thread pool; results keep index order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))
