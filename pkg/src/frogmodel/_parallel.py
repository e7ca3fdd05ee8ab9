"""Replica fan-out. Results always come back in task order, whatever the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def map_ordered(fn: Callable, tasks: Sequence, workers: int | None = 1) -> list:
    tasks = list(tasks)
    n = min(resolve_workers(workers), len(tasks))
    if n <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n))))


def starmap_ordered(fn: Callable, arg_tuples: Iterable[tuple], workers: int | None = 1) -> list:
    return map_ordered(_Star(fn), list(arg_tuples), workers)


class _Star:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, args):
        return self.fn(*args)
