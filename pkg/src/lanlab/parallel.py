"""Deterministic replication-parallel map.

Results are collected by replication index, so the output never depends on
the number of worker threads or on scheduling order. Each replication must
draw its randomness from its own keyed stream (see :mod:`lanlab.rng`).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["resolve_threads", "map_replications"]


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``LANLAB_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("LANLAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return int(threads)


def map_replications(fn, reps, threads: int | None = None) -> list:
    """``[fn(r) for r in reps]`` evaluated on a thread pool, in index order."""
    reps = list(reps)
    threads = resolve_threads(threads)
    if threads == 1 or len(reps) < 2:
        return [fn(r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, reps))
