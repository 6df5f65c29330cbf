"""Order-preserving parallel map used by the sampling loops."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, spread over ``threads`` workers when > 1.

    Results come back in input order, so reductions over them stay bit-stable.
    numpy releases the GIL inside the heavy linear algebra, which is where
    the callers spend their time.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
