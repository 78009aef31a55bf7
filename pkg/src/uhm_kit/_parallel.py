"""Shared-memory worker pool helpers: dynamic work queues with per-worker state."""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

__all__ = ["dynamic_run", "dynamic_reduce"]


def dynamic_run(fn: Callable[[int], None], n_items: int, workers: int) -> None:
    """Apply ``fn`` to 0..n_items-1, distributing indices dynamically over threads.

    Index draws from the shared counter are atomic under the GIL, so each item
    is processed exactly once. Exceptions propagate to the caller.
    """
    if workers <= 1 or n_items <= 1:
        for i in range(n_items):
            fn(i)
        return
    counter = itertools.count()
    failures: list[BaseException] = []

    def worker() -> None:
        while True:
            i = next(counter)
            if i >= n_items or failures:
                return
            try:
                fn(i)
            except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
                failures.append(exc)
                return

    threads = [threading.Thread(target=worker) for _ in range(min(workers, n_items))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]


def dynamic_reduce(
    fn: Callable[[int, T], None],
    n_items: int,
    workers: int,
    make_state: Callable[[], T],
) -> list[T]:
    """Like dynamic_run but each worker threads its own state through ``fn``.

    Returns the per-worker states for the caller to reduce.
    """
    if workers <= 1 or n_items <= 1:
        state = make_state()
        for i in range(n_items):
            fn(i, state)
        return [state]
    counter = itertools.count()
    states: list[T] = []
    failures: list[BaseException] = []
    lock = threading.Lock()

    def worker() -> None:
        state = make_state()
        with lock:
            states.append(state)
        while True:
            i = next(counter)
            if i >= n_items or failures:
                return
            try:
                fn(i, state)
            except BaseException as exc:  # noqa: BLE001
                failures.append(exc)
                return

    threads = [threading.Thread(target=worker) for _ in range(min(workers, n_items))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
    return states
