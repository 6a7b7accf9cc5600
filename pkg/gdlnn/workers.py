"""Order-preserving process fan-out."""

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(
    fn: Callable[[T], R],
    items: Iterable[T],
    jobs: int = 1,
    initializer: Optional[Callable[..., Any]] = None,
    initargs: Sequence[Any] = (),
) -> List[R]:
    """Apply ``fn`` to every item and return results in input order.

    Args:
        fn: A picklable top-level callable
        items: Work items
        jobs: Worker processes; 1 or less runs in the calling process
        initializer: Run once per worker (and once in-process when jobs <= 1)
        initargs: Arguments for ``initializer``

    Returns:
        List of results aligned with ``items``
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(item) for item in items]

    chunksize = max(1, len(items) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=tuple(initargs)) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
