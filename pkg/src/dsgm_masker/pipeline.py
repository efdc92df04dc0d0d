"""Frame pipeline (filters -> motion compensation -> DSGM) and the benchmark harness."""

from __future__ import annotations

import csv
import ctypes
import ctypes.util
import io
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from dsgm_masker import imageio
from dsgm_masker.dsgm import DsgmParams, DualModelPlanes, init_models, update_frame
from dsgm_masker.engine import SERIAL, Engine, PartitionSpec, TimingRecord, timed
from dsgm_masker.motioncomp import MotionParams, estimate_motion, warp_frame, warp_models
from dsgm_masker.preprocess import FILTER_IMPLS, gaussian_blur, median_filter

__all__ = [
    "DegenerateInputError",
    "FilterParams",
    "RunConfig",
    "Pipeline",
    "run_pipeline",
    "run_bench",
    "CSV_HEADER",
    "write_csv",
    "read_csv",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("num_tasks", "t_blur", "t_mtnc", "t_dsgm", "t_serl", "t_total", "speedup")
MASK_NAME = "mask{:06d}.pgm"


class DegenerateInputError(ValueError):
    """Empty sequences or frames whose size changes mid-sequence."""


@dataclass(frozen=True)
class FilterParams:
    impl: str = "separable"
    gauss_size: int = 5
    gauss_sigma: float = 1.0
    median_radius: int = 1
    order: str = "gauss-median"

    def __post_init__(self):
        if self.impl not in FILTER_IMPLS:
            raise ValueError(f"filter impl must be one of {FILTER_IMPLS}, got {self.impl!r}")
        if self.order not in ("gauss-median", "median-gauss"):
            raise ValueError(f"unknown filter order {self.order!r}")


@dataclass(frozen=True)
class RunConfig:
    input_dir: Path | None = None
    glob: str = "*.pgm"
    out_dir: Path | None = None
    filters: FilterParams = field(default_factory=FilterParams)
    dsgm: DsgmParams = field(default_factory=DsgmParams)
    motion: MotionParams | None = None
    engine: Engine = SERIAL
    frame_limit: int | None = None
    sweep: tuple[int, ...] = ()
    csv_path: Path | None = None
    bench_repeats: int = 1

    def __post_init__(self):
        if self.frame_limit is not None and self.frame_limit < 1:
            raise ValueError("frame limit must be >= 1")
        if any(t < 1 for t in self.sweep):
            raise ValueError("sweep task counts must be >= 1")


class Pipeline:
    """Stateful per-frame processor; one frame in flight at a time."""

    def __init__(self, filters: FilterParams = FilterParams(), dsgm: DsgmParams = DsgmParams(),
                 motion: MotionParams | None = None, engine: Engine = SERIAL,
                 timing: TimingRecord | None = None):
        self.filters = filters
        self.dsgm = dsgm
        self.motion = motion
        self.engine = engine
        self.timing = timing if timing is not None else TimingRecord()
        self.models: DualModelPlanes | None = None
        self._reference: np.ndarray | None = None

    def preprocess(self, frame: np.ndarray) -> np.ndarray:
        f = self.filters
        if f.impl == "none":
            return np.asarray(frame, dtype=np.float64)

        def blur(x):
            return gaussian_blur(x, f.gauss_size, f.gauss_sigma, f.impl, self.engine)

        def median(x):
            return median_filter(x, f.median_radius, self.engine)

        first, second = (blur, median) if f.order == "gauss-median" else (median, blur)
        return second(first(frame))

    def step(self, frame: np.ndarray) -> np.ndarray:
        """Consume one raw frame and return its 0/255 mask."""
        frame = np.asarray(frame, dtype=np.float64)
        if self.models is not None and frame.shape != self.models.shape:
            raise DegenerateInputError(f"frame size changed from {self.models.shape} to {frame.shape}")

        with timed("blur", self.timing):
            clean = self.preprocess(frame)

        if self.models is None:
            self.models = init_models(clean, self.dsgm)
            self._reference = clean
            self.timing.frames += 1
            return np.zeros(frame.shape, dtype=np.uint8)

        if self.motion is not None:
            with timed("mtnc", self.timing):
                clean = self._compensate(clean)

        with timed("dsgm", self.timing):
            mask = update_frame(clean, self.models, self.dsgm, self.engine)
        self.timing.frames += 1
        return mask

    def _compensate(self, clean: np.ndarray) -> np.ndarray:
        H = estimate_motion(self._reference, clean, self.motion)
        if H is None:
            self._reference = clean
            return clean
        if self.motion.target == "frame":
            # align the current frame to the reference the models live in
            clean = warp_frame(clean, np.linalg.inv(H))
        else:
            self.models = warp_models(self.models, H, self.dsgm.var_init)
        self._reference = clean
        return clean


def _frame_paths(config: RunConfig) -> list[Path]:
    if config.input_dir is None:
        raise DegenerateInputError("no input directory given")
    paths = imageio.sequence(config.input_dir, config.glob)
    if config.frame_limit is not None:
        paths = paths[: config.frame_limit]
    if not paths:
        raise DegenerateInputError(f"no frames matching {config.glob!r} in {config.input_dir}")
    return paths


def _iter_files(paths: list[Path]) -> Iterator[np.ndarray]:
    for p in paths:
        yield imageio.read_frame(p)


def run_pipeline(config: RunConfig, frames: Iterable[np.ndarray] | None = None,
                 engine: Engine | None = None) -> TimingRecord:
    """Process a sequence and return the accumulated timing record.

    Frames come from ``frames`` when given, otherwise from the configured
    input directory (decoding time then lands in ``t_serl``). The first frame
    seeds the models and yields an all-background mask. Masks are written to
    ``config.out_dir`` as ``mask%06d.pgm`` when it is set. ``t_total`` is the
    wall time of the whole run and ``t_serl`` whatever the three timed stages
    did not account for.
    """
    engine = engine if engine is not None else config.engine
    source = frames if frames is not None else _iter_files(_frame_paths(config))
    if config.out_dir is not None:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)

    record = TimingRecord()
    pipe = Pipeline(config.filters, config.dsgm, config.motion, engine, record)
    start = time.perf_counter()
    count = 0
    for frame in source:
        if config.frame_limit is not None and count >= config.frame_limit:
            break
        count += 1
        mask = pipe.step(frame)
        if config.out_dir is not None:
            imageio.write_mask(mask, Path(config.out_dir) / MASK_NAME.format(count))
    wall = time.perf_counter() - start
    if count == 0:
        raise DegenerateInputError("empty frame sequence")

    record.t_total = max(wall, record.t_stages)
    record.t_serl = record.t_total - record.t_stages
    return record


_M_TOP_PAD = -2


def _pad_heap(nbytes: int = 64 << 20) -> bool:
    """Ask glibc to keep ``nbytes`` of slack at the top of the main heap.

    Without it the main thread's arena trims and re-faults large numpy
    temporaries on every frame while worker-thread arenas keep theirs, which
    biases serial-vs-parallel timings. Best effort; False where unsupported.
    """
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        return bool(ctypes.CDLL(name).mallopt(_M_TOP_PAD, nbytes))
    except (OSError, AttributeError):
        return False


def _bench_row(label, rec: TimingRecord, serial_total: float) -> dict:
    return {
        "num_tasks": label,
        "t_blur": rec.t_blur,
        "t_mtnc": rec.t_mtnc,
        "t_dsgm": rec.t_dsgm,
        "t_serl": rec.t_serl,
        "t_total": rec.t_total,
        "speedup": serial_total / rec.t_total if rec.t_total > 0 else float("nan"),
    }


def _median_record(records: list[TimingRecord]) -> TimingRecord:
    return sorted(records, key=lambda r: r.t_total)[len(records) // 2]


def run_bench(config: RunConfig, frames: list[np.ndarray] | None = None) -> list[dict]:
    """Serial baseline plus one row-band run per task count in ``config.sweep``.

    Frames are decoded once up front so every run sees identical in-memory
    input, the glibc heap is padded (see :func:`_pad_heap`) and a short
    untimed warm-up precedes the serial baseline. With
    ``bench_repeats > 1`` each setting keeps its median run by total time. Rows are written to ``config.csv_path`` if set.
    """
    if not config.sweep:
        raise ValueError("bench mode needs a non-empty task sweep")
    if frames is None:
        frames = [imageio.read_frame(p) for p in _frame_paths(config)]
    frames = list(frames)
    if config.frame_limit is not None:
        frames = frames[: config.frame_limit]
    if not frames:
        raise DegenerateInputError("empty frame sequence")
    workers = config.engine.workers
    repeats = max(1, config.bench_repeats)

    def measure(engine: Engine) -> TimingRecord:
        return _median_record([run_pipeline(config, frames, engine) for _ in range(repeats)])

    _pad_heap()
    # untimed warm-up so the serial baseline does not pay first-touch costs
    run_pipeline(config, frames[:2], SERIAL)
    serial = measure(SERIAL)
    rows = [_bench_row("serial", serial, serial.t_total)]
    for tasks in config.sweep:
        engine = Engine(PartitionSpec("row_bands", tasks=tasks), workers)
        rec = measure(engine)
        rows.append(_bench_row(tasks, rec, serial.t_total))
        log.info("tasks=%s total=%.4fs speedup=%.3f", tasks, rec.t_total, rows[-1]["speedup"])

    if config.csv_path is not None:
        write_csv(rows, config.csv_path)
    return rows


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6g}"


def write_csv(rows: list[dict], path) -> None:
    """Write bench rows atomically (temp file in the target directory, then rename)."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in CSV_HEADER])
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_csv(path) -> list[dict]:
    """Parse a bench CSV; rejects files whose header differs from :data:`CSV_HEADER`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            row = dict(zip(CSV_HEADER, rec))
            row["num_tasks"] = row["num_tasks"] if row["num_tasks"] == "serial" else int(row["num_tasks"])
            for k in CSV_HEADER[1:]:
                row[k] = float(row[k])
            rows.append(row)
    return rows
