"""Deterministic fan-out of independent Monte Carlo batches."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "BLOCKFADE_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    limit = os.cpu_count() or 1
    if raw:
        try:
            limit = max(1, min(limit, int(raw)))
        except ValueError:
            pass
    return limit


def split(total: int, batch: int) -> list[int]:
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def map_batches(fn, sizes, rng: np.random.Generator):
    """Run ``fn(size, child_rng)`` per batch; results come back in batch order.

    Child streams are spawned from ``rng`` up front, so the outcome does not
    depend on the number of workers.
    """
    children = rng.spawn(len(sizes))
    workers = worker_count()
    if workers == 1 or len(sizes) == 1:
        return [fn(s, r) for s, r in zip(sizes, children)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, sizes, children))
