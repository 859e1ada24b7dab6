"""Small numerical helpers shared by the analysis modules."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar, Union

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

StepRule = Union[float, Callable[[np.ndarray, int], float]]


def central_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], x: Sequence[float],
                                step: StepRule = 1e-6) -> np.ndarray:
    """Jacobian of func at x by central differences.

    ``step`` is either a fixed increment or a callable (x, i) -> h_i.
    """
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        h = step(x, i) if callable(step) else float(step)
        e = np.zeros_like(x)
        e[i] = h
        columns.append((np.atleast_1d(func(x + e)) - np.atleast_1d(func(x - e))) / (2.0 * h))
    return np.column_stack(columns)


def relative_step(base: float, floor: Optional[float] = None) -> Callable[[np.ndarray, int], float]:
    """Step rule base*(1 + |x_i|), or max(floor, base*|x_i|) when floor is given."""
    if floor is None:
        return lambda x, i: base * (1.0 + abs(x[i]))
    return lambda x, i: max(floor, base * abs(x[i]))


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Map func over items, preserving order; workers <= 1 runs inline.

    Threads keep results in input order and share the compiled model, whose
    generated field functions cannot be pickled for a process pool. The
    integration loop holds the GIL for most of its time, so extra threads
    overlap only the numpy and scipy kernels; expect little speedup.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
