"""Chunked grid reductions whose result does not depend on the thread count."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16

T = TypeVar("T")


def chunk_bounds(total: int, chunk_size: int = CHUNK_SIZE) -> List[range]:
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def map_chunks(task: Callable[[range], T], total: int, max_concurrency: int = 1,
               chunk_size: int = CHUNK_SIZE) -> List[T]:
    """Run ``task`` on fixed chunks of [0, total) and return results in chunk order."""
    chunks = chunk_bounds(total, chunk_size)
    if max_concurrency <= 1 or len(chunks) <= 1:
        return [task(chunk) for chunk in chunks]
    logger.debug(f"grid chunk dispatch: {len(chunks)} chunks on {max_concurrency} threads")
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(task, chunks))


def tree_sum(values: Sequence[float]) -> float:
    """Pairwise sum in a fixed order."""
    items = [float(v) for v in values]
    if not items:
        return 0.0
    while len(items) > 1:
        paired = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


def weighted_power_sum(values: np.ndarray, weights: np.ndarray, q: float, max_concurrency: int = 1) -> float:
    """sum_i w_i |v_i|^q with a deterministic reduction order."""
    flat_values = np.ravel(values)
    flat_weights = np.ravel(np.broadcast_to(weights, np.shape(values)))

    def partial(chunk: range) -> float:
        block = np.abs(flat_values[chunk.start:chunk.stop])
        return float(np.sum(flat_weights[chunk.start:chunk.stop] * block ** q))

    return tree_sum(map_chunks(partial, flat_values.size, max_concurrency))


def masked_power_sum(values: np.ndarray, weights: np.ndarray, mask: np.ndarray, q: float,
                     max_concurrency: int = 1) -> float:
    """weighted_power_sum restricted to ``mask``."""
    return weighted_power_sum(np.where(mask, values, 0.0), weights, q, max_concurrency)
