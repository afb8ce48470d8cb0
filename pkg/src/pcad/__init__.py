"""Unified multi-category point-cloud anomaly detection.

One model is trained on normal samples from several object categories at
once. Clouds are tokenized by farthest point sampling and multi-scale
neighborhoods, encoded by a shared transformer with a category-aware
global token, and reconstructed under geometry-guided attention; anomaly
scores are smoothed reconstruction residuals.
"""

from .cloud import (
    DatasetManifest,
    GroupSet,
    ManifestSample,
    PointCloud,
    load_manifest,
    load_ply,
    load_sample,
    save_ply,
)
from .config import RunConfig, desk_profile, paper_profile
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateGeometryError,
    NumericalError,
    UndefinedMetricError,
)
from .model import PreparedSample, UnifiedModel, prepare_sample
from .synth import DatasetConfig, build_dataset, generate_category, inject_defect

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetConfig",
    "DatasetManifest",
    "DegenerateGeometryError",
    "GroupSet",
    "ManifestSample",
    "NumericalError",
    "PointCloud",
    "PreparedSample",
    "RunConfig",
    "UndefinedMetricError",
    "UnifiedModel",
    "build_dataset",
    "desk_profile",
    "generate_category",
    "inject_defect",
    "load_manifest",
    "load_ply",
    "load_sample",
    "paper_profile",
    "prepare_sample",
    "save_ply",
    "__version__",
]
