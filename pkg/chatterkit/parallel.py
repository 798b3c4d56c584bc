"""Ordered parallel maps shared by the featurizers and the harness."""
import logging
import sys
from collections.abc import Callable, Iterable, Sequence
from typing import Any, TypeVar

from joblib import Parallel, delayed
from tqdm import tqdm

from .config import worker_count

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Set by the CLI's --quiet flag.
show_progress = True


def parallel_map(
    func: Callable[..., T],
    items: Sequence[Any] | Iterable[Any],
    *,
    n_jobs: int | None = None,
    prefer: str = "processes",
    desc: str | None = None,
) -> list[T]:
    """Apply ``func`` to every item and return results in input order.

    Args:
        func: Callable taking one item.
        items: Work items.
        n_jobs: joblib worker count; defaults to ``worker_count()``.
        prefer: "processes" for Python-heavy work, "threads" for nogil kernels.
        desc: Progress-bar label; no bar when None.

    Returns:
        List of results aligned with ``items``.
    """
    items = list(items)
    if not items:
        return []
    jobs = worker_count() if n_jobs is None else n_jobs
    iterator = items
    if desc is not None and show_progress and sys.stderr.isatty():
        iterator = tqdm(items, desc=desc, leave=False)
    if jobs == 1 or len(items) == 1:
        return [func(item) for item in iterator]
    logger.debug("parallel_map %s: %d items on %d workers", desc or func.__name__, len(items), jobs)
    return Parallel(n_jobs=jobs, prefer=prefer)(delayed(func)(item) for item in iterator)
