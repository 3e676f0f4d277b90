"""Replica-level worker pool with deterministic aggregation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def replica_map(fn, count: int, jobs: int | None = 1) -> list:
    """[fn(k) for k in range(count)], optionally on a thread pool.

    Results come back ordered by replica index regardless of completion
    order, so aggregation downstream is independent of the worker count.
    """
    if jobs is None or jobs <= 1 or count <= 1:
        return [fn(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(count)))
