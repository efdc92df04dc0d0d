"""Noise-suppression filters: Gaussian blur (naive 2-D and separable) and median.

All filters clamp out-of-range coordinates to the nearest edge pixel and work
in float64; nothing is quantized here. Each filter accepts an
:class:`~dsgm_masker.engine.Engine` and splits its output across the engine's
partition. Every output pixel is computed by the same sequence of floating
point operations whatever the partition, so results are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dsgm_masker.engine import SERIAL, Engine, Rect

__all__ = [
    "Kernel1D",
    "Kernel2D",
    "OpCounter",
    "gaussian_kernel_1d",
    "gaussian_kernel_2d",
    "convolve_2d",
    "convolve_separable",
    "median_filter",
    "gaussian_blur",
]

FILTER_IMPLS = ("naive2d", "separable", "none")


@dataclass(frozen=True)
class Kernel1D:
    taps: np.ndarray
    sigma: float

    @property
    def size(self) -> int:
        return len(self.taps)

    @property
    def radius(self) -> int:
        return len(self.taps) // 2


@dataclass(frozen=True)
class Kernel2D:
    weights: np.ndarray
    sigma: float

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2


@dataclass
class OpCounter:
    """Tally of multiply-adds issued by the convolution routines."""

    madds: int = 0


def gaussian_kernel_1d(size: int, sigma: float) -> Kernel1D:
    """Sampled, normalized Gaussian centred on the middle tap."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    return Kernel1D(taps=taps, sigma=float(sigma))


def gaussian_kernel_2d(size: int, sigma: float) -> Kernel2D:
    k = gaussian_kernel_1d(size, sigma).taps
    w = np.outer(k, k)
    return Kernel2D(weights=w / w.sum(), sigma=float(sigma))


def convolve_2d(frame: np.ndarray, kernel: Kernel2D, engine: Engine = SERIAL,
                counter: OpCounter | None = None) -> np.ndarray:
    """Direct k x k convolution; O(n m k^2) multiply-adds."""
    frame = np.asarray(frame, dtype=np.float64)
    r = kernel.radius
    k = kernel.size
    padded = np.pad(frame, r, mode="edge")
    out = np.empty_like(frame)
    w = kernel.weights

    def work(rect: Rect) -> None:
        y0, y1, x0, x1 = rect
        acc = np.zeros((y1 - y0, x1 - x0))
        tmp = np.empty_like(acc)
        for i in range(k):
            for j in range(k):
                acc += np.multiply(w[i, j], padded[y0 + i : y1 + i, x0 + j : x1 + j], out=tmp)
        # weights sum to 1 only to within an ulp
        out[y0:y1, x0:x1] = np.clip(acc, 0.0, 255.0)

    engine.run(work, frame.shape)
    if counter is not None:
        counter.madds += frame.size * k * k
    return out


def convolve_separable(frame: np.ndarray, kernel: Kernel1D, engine: Engine = SERIAL,
                       counter: OpCounter | None = None) -> np.ndarray:
    """Row pass then column pass with a 1-D kernel; O(n m 2k) multiply-adds.

    The two passes are separate parallel sections: the column pass reads
    intermediate rows owned by neighbouring work units.
    """
    frame = np.asarray(frame, dtype=np.float64)
    r = kernel.radius
    taps = kernel.taps
    k = kernel.size

    padded_x = np.pad(frame, ((0, 0), (r, r)), mode="edge")
    rows = np.empty_like(frame)

    def row_pass(rect: Rect) -> None:
        y0, y1, x0, x1 = rect
        acc = np.zeros((y1 - y0, x1 - x0))
        tmp = np.empty_like(acc)
        for j in range(k):
            acc += np.multiply(taps[j], padded_x[y0:y1, x0 + j : x1 + j], out=tmp)
        rows[y0:y1, x0:x1] = acc

    engine.run(row_pass, frame.shape)

    padded_y = np.pad(rows, ((r, r), (0, 0)), mode="edge")
    out = np.empty_like(frame)

    def col_pass(rect: Rect) -> None:
        y0, y1, x0, x1 = rect
        acc = np.zeros((y1 - y0, x1 - x0))
        tmp = np.empty_like(acc)
        for i in range(k):
            acc += np.multiply(taps[i], padded_y[y0 + i : y1 + i, x0:x1], out=tmp)
        out[y0:y1, x0:x1] = np.clip(acc, 0.0, 255.0)

    engine.run(col_pass, frame.shape)
    if counter is not None:
        counter.madds += frame.size * 2 * k
    return out


def median_filter(frame: np.ndarray, radius: int = 1, engine: Engine = SERIAL) -> np.ndarray:
    """Median of the clamped ``(2r+1) x (2r+1)`` neighbourhood of each pixel."""
    if radius < 1:
        raise ValueError(f"median radius must be >= 1, got {radius}")
    frame = np.asarray(frame, dtype=np.float64)
    size = 2 * radius + 1
    mid = size * size // 2
    padded = np.pad(frame, radius, mode="edge")
    out = np.empty_like(frame)

    def work(rect: Rect) -> None:
        y0, y1, x0, x1 = rect
        window = np.stack([
            padded[y0 + i : y1 + i, x0 + j : x1 + j]
            for i in range(size)
            for j in range(size)
        ])
        out[y0:y1, x0:x1] = np.partition(window, mid, axis=0)[mid]

    engine.run(work, frame.shape)
    return out


def gaussian_blur(frame: np.ndarray, size: int = 5, sigma: float = 1.0, impl: str = "separable",
                  engine: Engine = SERIAL, counter: OpCounter | None = None) -> np.ndarray:
    """Dispatch on ``impl`` (one of ``naive2d``, ``separable``, ``none``)."""
    if impl == "none":
        return np.asarray(frame, dtype=np.float64)
    if impl == "naive2d":
        return convolve_2d(frame, gaussian_kernel_2d(size, sigma), engine, counter)
    if impl == "separable":
        return convolve_separable(frame, gaussian_kernel_1d(size, sigma), engine, counter)
    raise ValueError(f"unknown filter implementation {impl!r}")
