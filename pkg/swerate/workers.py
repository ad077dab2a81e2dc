"""Worker pool for independent study cells.

Cells run in a process pool driven from an asyncio loop; results come back
in submission order, so tables never depend on the worker count.
"""

from __future__ import annotations

import asyncio
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

WORKERS_ENV = "SWERATE_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r (not an integer)", WORKERS_ENV, raw)
        return 1
    if value < 1:
        logger.warning("Ignoring %s=%d (must be >= 1)", WORKERS_ENV, value)
        return 1
    return value


async def _gather_cells(fn: Callable[[T], R], cells: Sequence[T], workers: int) -> List[R]:
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, fn, cell) for cell in cells]
        return list(await asyncio.gather(*futures))


def run_cells(fn: Callable[[T], R], cells: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """fn must be a module-level function; each cell must be picklable."""
    workers = workers or default_workers()
    cells = list(cells)
    if workers <= 1 or len(cells) <= 1:
        return [fn(cell) for cell in cells]
    logger.info("Running %d cells on %d workers", len(cells), workers)
    return asyncio.run(_gather_cells(fn, cells, min(workers, len(cells))))
