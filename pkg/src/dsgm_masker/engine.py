"""Data-parallel execution: row-band / tile partitioning, a worker pool, stage timing.

Per-pixel work is expressed as a callable taking a :class:`Rect`. Each call
must write only the pixels inside its rectangle, so any disjoint partition of
the image gives the same result as a serial sweep.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, wait
from contextlib import contextmanager
from dataclasses import dataclass, fields
from typing import Callable, Iterator, NamedTuple

__all__ = [
    "Rect",
    "PartitionSpec",
    "TimingRecord",
    "Engine",
    "row_bands",
    "tiles",
    "run_partitioned",
    "time_section",
    "timed",
    "hardware_threads",
]

SECTIONS = ("blur", "mtnc", "dsgm", "serl")


class Rect(NamedTuple):
    """Half-open pixel rectangle ``[y0, y1) x [x0, x1)``."""

    y0: int
    y1: int
    x0: int
    x1: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    @property
    def area(self) -> int:
        return (self.y1 - self.y0) * (self.x1 - self.x0)


def hardware_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def row_bands(height: int, tasks: int) -> list[tuple[int, int]]:
    """Split ``range(height)`` into ``min(tasks, height)`` balanced contiguous bands.

    Band sizes differ by at most one; the larger bands come first.
    """
    if height < 1 or tasks < 1:
        raise ValueError("height and tasks must be >= 1")
    n = min(tasks, height)
    base, extra = divmod(height, n)
    bands = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        bands.append((start, start + size))
        start += size
    return bands


def tiles(width: int, height: int, side: int) -> list[Rect]:
    """Cover the image with ``side x side`` squares, truncating at the edges."""
    if width < 1 or height < 1 or side < 1:
        raise ValueError("width, height and side must be >= 1")
    return [
        Rect(y, min(y + side, height), x, min(x + side, width))
        for y in range(0, height, side)
        for x in range(0, width, side)
    ]


@dataclass(frozen=True)
class PartitionSpec:
    """How to split a frame into work units.

    ``tasks`` is read only for ``row_bands``; ``tile_side`` only for ``tiles``.
    """

    strategy: str = "row_bands"
    tasks: int = 1
    tile_side: int = 16

    def __post_init__(self):
        if self.strategy not in ("row_bands", "tiles"):
            raise ValueError(f"unknown partition strategy {self.strategy!r}")
        if self.tasks < 1 or self.tile_side < 1:
            raise ValueError("tasks and tile_side must be >= 1")

    def rects(self, width: int, height: int) -> list[Rect]:
        if self.strategy == "row_bands":
            return [Rect(y0, y1, 0, width) for y0, y1 in row_bands(height, self.tasks)]
        return tiles(width, height, self.tile_side)


_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"dsgm-w{workers}")
            _pools[workers] = pool
        return pool


def run_partitioned(
    work: Callable[[Rect], object],
    spec: PartitionSpec | None,
    shape: tuple[int, int],
    workers: int | None = None,
) -> None:
    """Run ``work`` once per rectangle of ``spec`` over an image of ``shape``.

    ``spec=None`` means serial: one call on the whole image in the calling
    thread, with no pool involved. Otherwise every unit is submitted to a
    pool of ``workers`` threads (default: hardware threads) and this call
    returns only after all units have settled. If any unit raised, the
    exception of the earliest failing unit (in partition order) is re-raised.
    """
    height, width = shape
    if spec is None:
        work(Rect(0, height, 0, width))
        return

    pool = _pool(workers or hardware_threads())
    futures = [pool.submit(work, rect) for rect in spec.rects(width, height)]
    wait(futures)
    for fut in futures:
        exc = fut.exception()
        if exc is not None:
            raise exc


@dataclass(frozen=True)
class Engine:
    """A partition spec bound to a worker count; ``partition=None`` is serial."""

    partition: PartitionSpec | None = None
    workers: int | None = None

    def run(self, work: Callable[[Rect], object], shape: tuple[int, int]) -> None:
        run_partitioned(work, self.partition, shape, self.workers)

    @property
    def label(self) -> str:
        if self.partition is None:
            return "serial"
        if self.partition.strategy == "row_bands":
            return str(self.partition.tasks)
        return f"tile{self.partition.tile_side}"


SERIAL = Engine()


@dataclass
class TimingRecord:
    """Accumulated wall-clock seconds per pipeline stage."""

    t_blur: float = 0.0
    t_mtnc: float = 0.0
    t_dsgm: float = 0.0
    t_serl: float = 0.0
    t_total: float = 0.0
    frames: int = 0

    def add(self, section: str, seconds: float) -> None:
        if section not in SECTIONS:
            raise ValueError(f"unknown timing section {section!r}")
        name = f"t_{section}"
        setattr(self, name, getattr(self, name) + seconds)
        self.t_total += seconds

    @property
    def t_stages(self) -> float:
        return self.t_blur + self.t_mtnc + self.t_dsgm

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@contextmanager
def timed(section: str, record: TimingRecord) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        record.add(section, time.perf_counter() - start)


def time_section(section: str, record: TimingRecord, work: Callable[[], object]):
    """Run ``work`` and charge its monotonic wall time to ``section`` and the total."""
    with timed(section, record):
        return work()
