"""Motion masking with dual-mode single Gaussian background models."""

from dsgm_masker.dsgm import DsgmParams, DualModelPlanes, PixelModel, init_models, update_frame, update_pixel
from dsgm_masker.engine import Engine, PartitionSpec, TimingRecord
from dsgm_masker.imageio import read_frame, sequence, write_frame, write_mask
from dsgm_masker.pipeline import Pipeline, RunConfig, run_bench, run_pipeline

__all__ = [
    "DsgmParams",
    "DualModelPlanes",
    "Engine",
    "PartitionSpec",
    "Pipeline",
    "PixelModel",
    "RunConfig",
    "TimingRecord",
    "init_models",
    "read_frame",
    "run_bench",
    "run_pipeline",
    "sequence",
    "update_frame",
    "update_pixel",
    "write_frame",
    "write_mask",
]

__version__ = "0.1.0"
