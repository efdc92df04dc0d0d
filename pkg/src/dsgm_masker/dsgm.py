"""Dual-mode single Gaussian background model.

Every pixel carries two Gaussian models: the *apparent* one used for
classification and a *candidate* that collects evidence for a new background.
A frame update runs, per pixel:

1. if ``(I - mu_A)^2 < theta_s * max(var_A, var_floor_match)``, age-weighted
   update of the apparent model;
2. else if the same test passes against the candidate, update the candidate;
3. else reset the candidate to ``(I, var_init, 1)``;
4. if the candidate is now older than the apparent model, promote it and
   reset the candidate;
5. label the pixel background (0) or foreground (255) against the
   post-update apparent model.

``var`` is a variance-like second moment compared directly to squared
intensity differences; no square roots are taken anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dsgm_masker.engine import SERIAL, Engine, Rect

__all__ = [
    "BACKGROUND",
    "FOREGROUND",
    "UPDATE_RULES",
    "DsgmParams",
    "PixelModel",
    "DualModelPlanes",
    "init_models",
    "update_pixel",
    "update_block",
    "update_frame",
]

BACKGROUND = 0
FOREGROUND = 255
UPDATE_RULES = ("paper_eq", "appendix_code")


@dataclass(frozen=True)
class DsgmParams:
    """Thresholds and constants of the dual-model update.

    ``update_rule="paper_eq"`` learns at rate ``1/(a+1)``, ``"appendix_code"``
    at ``1/a``, with the age ``a`` read before it is incremented. ``classify_intensity_scaled`` replaces the
    variance in the classification gate with the pixel intensity.
    """

    theta_s: float = 4.0
    theta_d: float = 4.0
    var_init: float = 255.0
    age_cap: int = 30
    var_floor_match: float = 0.1
    var_floor_classify: float = 0.25
    update_rule: str = "paper_eq"
    classify_intensity_scaled: bool = False

    def __post_init__(self):
        for name in ("theta_s", "theta_d", "var_init", "var_floor_match", "var_floor_classify"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.age_cap < 1:
            raise ValueError("age_cap must be >= 1")
        if self.update_rule not in UPDATE_RULES:
            raise ValueError(f"update_rule must be one of {UPDATE_RULES}, got {self.update_rule!r}")


@dataclass(frozen=True)
class PixelModel:
    mean: float
    var: float
    age: int


@dataclass
class DualModelPlanes:
    """Per-pixel apparent (``*_a``) and candidate (``*_c``) model planes."""

    mean_a: np.ndarray
    var_a: np.ndarray
    age_a: np.ndarray
    mean_c: np.ndarray
    var_c: np.ndarray
    age_c: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean_a.shape

    def copy(self) -> "DualModelPlanes":
        return DualModelPlanes(*(a.copy() for a in self.planes()))

    def planes(self) -> tuple[np.ndarray, ...]:
        return (self.mean_a, self.var_a, self.age_a, self.mean_c, self.var_c, self.age_c)

    def apparent(self, y: int, x: int) -> PixelModel:
        return PixelModel(float(self.mean_a[y, x]), float(self.var_a[y, x]), int(self.age_a[y, x]))

    def candidate(self, y: int, x: int) -> PixelModel:
        return PixelModel(float(self.mean_c[y, x]), float(self.var_c[y, x]), int(self.age_c[y, x]))

    def identical_to(self, other: "DualModelPlanes") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.planes(), other.planes()))


def init_models(first_frame: np.ndarray, params: DsgmParams = DsgmParams()) -> DualModelPlanes:
    """Seed both models of every pixel with ``(I, var_init, 1)``."""
    frame = np.asarray(first_frame, dtype=np.float64)
    if frame.ndim != 2:
        raise ValueError("first frame must be 2-D")
    var = np.full(frame.shape, float(params.var_init))
    age = np.ones(frame.shape, dtype=np.int64)
    return DualModelPlanes(frame.copy(), var, age, frame.copy(), var.copy(), age.copy())


def _learning_rate(age, rule: str):
    return 1 / (age + 1) if rule == "paper_eq" else 1.0 / age


# (1 - w) * m + w * x evaluated as m + w * (x - m): same value in exact
# arithmetic, but a constant input leaves the mean bit-exactly unchanged.
def _update_model(intensity: float, model: PixelModel, params: DsgmParams) -> PixelModel:
    w = _learning_rate(model.age, params.update_rule)
    mean = model.mean + w * (intensity - model.mean)
    diff = mean - intensity
    var = model.var + w * (diff * diff - model.var)
    return PixelModel(mean, var, min(model.age + 1, params.age_cap))


def update_pixel(intensity: float, apparent: PixelModel, candidate: PixelModel,
                 params: DsgmParams = DsgmParams()) -> tuple[PixelModel, PixelModel, int]:
    """One dual-model update for a single pixel; returns ``(apparent, candidate, label)``."""
    intensity = float(intensity)
    da = intensity - apparent.mean
    dc = intensity - candidate.mean
    fresh = PixelModel(intensity, float(params.var_init), 1)

    if da * da < params.theta_s * max(apparent.var, params.var_floor_match):
        apparent = _update_model(intensity, apparent, params)
    elif dc * dc < params.theta_s * max(candidate.var, params.var_floor_match):
        candidate = _update_model(intensity, candidate, params)
    else:
        candidate = fresh

    if candidate.age > apparent.age:
        apparent, candidate = candidate, fresh

    d = apparent.mean - intensity
    if params.classify_intensity_scaled:
        gate = params.theta_d * max(params.var_floor_classify, intensity)
    else:
        gate = params.theta_d * max(apparent.var, params.var_floor_classify)
    return apparent, candidate, BACKGROUND if d * d <= gate else FOREGROUND


def _update_arrays(intensity, mean, var, age, sel, params: DsgmParams) -> None:
    """Apply the age-weighted update in place at pixels selected by ``sel``."""
    i = intensity[sel]
    a = age[sel]
    w = _learning_rate(a, params.update_rule)
    m0 = mean[sel]
    m = m0 + w * (i - m0)
    diff = m - i
    v0 = var[sel]
    mean[sel] = m
    var[sel] = v0 + w * (diff * diff - v0)
    age[sel] = np.minimum(a + 1, params.age_cap)


def update_block(intensity: np.ndarray, mean_a: np.ndarray, var_a: np.ndarray, age_a: np.ndarray,
                 mean_c: np.ndarray, var_c: np.ndarray, age_c: np.ndarray,
                 params: DsgmParams) -> np.ndarray:
    """Vectorized :func:`update_pixel` over equally shaped views, mutated in place.

    Returns the uint8 label block. The arithmetic mirrors the scalar path
    operation for operation so both agree bit for bit.
    """
    da = intensity - mean_a
    dc = intensity - mean_c
    match_a = da * da < params.theta_s * np.maximum(var_a, params.var_floor_match)
    match_c = ~match_a & (dc * dc < params.theta_s * np.maximum(var_c, params.var_floor_match))
    reset = ~(match_a | match_c)

    if match_a.any():
        _update_arrays(intensity, mean_a, var_a, age_a, match_a, params)
    if match_c.any():
        _update_arrays(intensity, mean_c, var_c, age_c, match_c, params)
    mean_c[reset] = intensity[reset]
    var_c[reset] = params.var_init
    age_c[reset] = 1

    swap = age_c > age_a
    if swap.any():
        mean_a[swap] = mean_c[swap]
        var_a[swap] = var_c[swap]
        age_a[swap] = age_c[swap]
        mean_c[swap] = intensity[swap]
        var_c[swap] = params.var_init
        age_c[swap] = 1

    d = mean_a - intensity
    if params.classify_intensity_scaled:
        gate = params.theta_d * np.maximum(params.var_floor_classify, intensity)
    else:
        gate = params.theta_d * np.maximum(var_a, params.var_floor_classify)
    return np.where(d * d <= gate, BACKGROUND, FOREGROUND).astype(np.uint8)


def update_frame(frame: np.ndarray, models: DualModelPlanes, params: DsgmParams = DsgmParams(),
                 engine: Engine = SERIAL) -> np.ndarray:
    """Update ``models`` in place with ``frame`` and return the 0/255 mask.

    Pixels are independent, so each work unit of ``engine`` touches only its
    own rectangle of the frame, the planes and the mask.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != models.shape:
        raise ValueError(f"frame shape {frame.shape} does not match model planes {models.shape}")
    mask = np.empty(frame.shape, dtype=np.uint8)
    planes = models.planes()

    def work(rect: Rect) -> None:
        s = rect.slices
        mask[s] = update_block(frame[s], *(p[s] for p in planes), params)

    engine.run(work, frame.shape)
    return mask
