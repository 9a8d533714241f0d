"""Layer-parallel map with ordered results"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

_threads = {'count': 1}


def configure_threads(count: Optional[int]):
    if count is not None:
        _threads['count'] = max(1, int(count))


def thread_count() -> int:
    return _threads['count']


def map_layers(func: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None,
               what: str = 'layer') -> List[R]:
    """
    Apply ``func`` to every item, in parallel when more than one thread is configured.

    Results come back in input order regardless of completion order. The first
    exception raised by a worker is re-raised after all workers finish.

    Returns:
        List of results aligned with ``items``
    """
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]

    start = time.time()
    results: List[Optional[R]] = [None] * len(items)
    errors = []
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as ex:
        fut2index = {ex.submit(func, item): k for k, item in enumerate(items)}
        for fut in as_completed(fut2index):
            k = fut2index[fut]
            try:
                results[k] = fut.result()
            except Exception as e:
                logger.error(f"{what} {k} failed: {e}")
                errors.append((k, e))
    logger.debug(f"Mapped {len(items)} {what}s on {threads} threads in {time.time() - start:.2f}s")
    if errors:
        raise min(errors, key=lambda item: item[0])[1]
    return results
