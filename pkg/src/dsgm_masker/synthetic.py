"""Deterministic synthetic sequences for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from dsgm_masker.engine import Rect


def moving_square_sequence(n_frames: int = 10, size: int = 64, side: int = 8, step: int = 5,
                           background: float = 50.0, foreground: float = 200.0,
                           noise: float = 0.0, seed: int = 0):
    """Bright ``side x side`` square sliding right across a flat background.

    Returns ``(frames, rects)`` where ``rects[t]`` is the square's footprint in
    frame ``t``.
    """
    rng = np.random.default_rng(seed)
    y0 = (size - side) // 2
    frames, rects = [], []
    for t in range(n_frames):
        x0 = 4 + step * t
        if x0 + side > size:
            raise ValueError("square leaves the frame; use fewer frames or a smaller step")
        f = np.full((size, size), background)
        f[y0 : y0 + side, x0 : x0 + side] = foreground
        if noise > 0:
            f = np.clip(f + rng.normal(0.0, noise, f.shape), 0, 255)
        frames.append(f)
        rects.append(Rect(y0, y0 + side, x0, x0 + side))
    return frames, rects


def random_sequence(n_frames: int, height: int, width: int, seed: int = 0) -> list[np.ndarray]:
    """Frames that mix a static random background with fresh random pixels."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 255, (height, width))
    frames = []
    for _ in range(n_frames):
        f = base + rng.normal(0, 6, base.shape)
        flip = rng.random(base.shape) < 0.15
        f[flip] = rng.uniform(0, 255, flip.sum())
        frames.append(np.clip(f, 0, 255))
    return frames


def textured_image(height: int, width: int, seed: int = 0, smooth: int = 2) -> np.ndarray:
    """Corner-rich texture: box-smoothed uniform noise rescaled to [0, 255]."""
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 255, (height + 2 * smooth, width + 2 * smooth))
    k = 2 * smooth + 1
    acc = np.zeros((height, width))
    for i in range(k):
        for j in range(k):
            acc += img[i : i + height, j : j + width]
    acc -= acc.min()
    return acc * (255.0 / acc.max())


def noisy_background_sequence(n_frames: int, width: int = 320, height: int = 240,
                              seed: int = 0) -> list[np.ndarray]:
    """Benchmark input: static texture, sensor noise and a walking bright block."""
    rng = np.random.default_rng(seed)
    base = 0.6 * textured_image(height, width, seed) + 40
    frames = []
    for t in range(n_frames):
        f = base + rng.normal(0, 3, base.shape)
        x0 = (5 * t) % max(width - 40, 1)
        f[height // 3 : height // 3 + 60, x0 : x0 + 40] = 230
        frames.append(np.clip(f, 0, 255))
    return frames
