"""Seeded random streams and worker fan-out.

Stream ``i`` of master seed ``s`` is ``PCG64(SeedSequence(s, spawn_key=(i,)))``:
numpy's SeedSequence hashes the pair into the generator state, so every
stream is fixed by ``(s, i)`` alone.  Work is always split into the same
chunks and results come back in chunk order, which makes outputs identical
for any worker count.  ``MGS_THREADS`` caps the worker count (default 1).
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def stream_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        raw = os.environ.get("MGS_THREADS", "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"MGS_THREADS must be an integer, got {raw!r}") from None
    return max(1, workers)


def map_chunks(fn: Callable[[T], R], jobs: Iterable[T], workers: int | None = None) -> list[R]:
    jobs = list(jobs)
    n = min(worker_count(workers), len(jobs))
    if n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))
