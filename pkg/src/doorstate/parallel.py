"""Ordered parallel map over independent solves.

Worker threads come from anyio's thread pool, bounded by a capacity limiter.
Results are returned in input order, so reductions over them are
deterministic regardless of completion order.
"""
from __future__ import annotations
from typing import Callable, Iterable, Optional, TypeVar

import anyio
import anyio.to_thread

from .constants import DEFAULT_WORKERS

__all__ = ["map_ordered"]

T = TypeVar("T")
R = TypeVar("R")


async def _gather(fn: Callable[[T], R], items: list[T], workers: int) -> list[R]:
    limiter = anyio.CapacityLimiter(workers)
    results: list[Optional[R]] = [None] * len(items)

    async def run_one(index: int, item: T) -> None:
        results[index] = await anyio.to_thread.run_sync(fn, item, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for index, item in enumerate(items):
            tg.start_soon(run_one, index, item)
    return results  # type: ignore[return-value]


def _first_leaf(exc: BaseException) -> BaseException:
    while hasattr(exc, "exceptions") and exc.exceptions:
        exc = exc.exceptions[0]
    return exc


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = DEFAULT_WORKERS) -> list[R]:
    """Apply ``fn`` to every item, in parallel when ``workers > 1``.

    Args:
        fn: Function of one item; must be safe to call from worker threads
        items: Inputs
        workers: Maximum number of concurrent calls

    Returns:
        Results in input order

    Raises:
        Whatever the first failing call raised (unwrapped from the task group)
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    try:
        return anyio.run(_gather, fn, items, workers)
    except Exception as exc:
        leaf = _first_leaf(exc)
        if leaf is exc:
            raise
        raise leaf from exc
