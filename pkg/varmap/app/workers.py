"""
Shared thread pool for independent map evaluations.

Numeric kernels release the GIL, so worker threads run in parallel.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_executor: Optional[ThreadPoolExecutor] = None
_executor_workers = 0
_lock = threading.Lock()


def get_executor(threads: int) -> ThreadPoolExecutor:
    """Get the global executor, recreating it if a different size is requested."""
    global _executor, _executor_workers
    with _lock:
        if _executor is None or _executor_workers != threads:
            if _executor is not None:
                _executor.shutdown(wait=True)
            _executor = ThreadPoolExecutor(max_workers=threads, thread_name_prefix="varmap-worker")
            _executor_workers = threads
            logger.debug("Created thread pool executor with %d workers", threads)
        return _executor


def shutdown_executor():
    global _executor, _executor_workers
    with _lock:
        if _executor is not None:
            _executor.shutdown(wait=True)
            _executor = None
            _executor_workers = 0
            logger.debug("Thread pool executor shut down")


def run_parallel(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Map func over items, preserving order.

    threads <= 1 runs inline, so results never depend on the pool.
    """
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    executor = get_executor(threads)
    return list(executor.map(func, items))
