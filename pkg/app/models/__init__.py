"""Models package: run configuration and data containers."""

# Configuration models
from .config import (
    MlpSpec,
    NetworkSpec,
    LossConfig,
    ViewAugmentation,
    AugmentationConfig,
    ScheduleConfig,
    LarsConfig,
    ProbeConfig,
    DataConfig,
    RunConfig,
)

# Presets and config files
from .presets import PRESETS, get_preset, build_run_config, load_run_config

# Data containers
from .data import (
    Dataset,
    ImageCollection,
    ViewRecord,
    ViewSet,
    ViewBatch,
    EmbeddingSet,
    MetricsRow,
)

__all__ = [
    # Configuration models
    "MlpSpec",
    "NetworkSpec",
    "LossConfig",
    "ViewAugmentation",
    "AugmentationConfig",
    "ScheduleConfig",
    "LarsConfig",
    "ProbeConfig",
    "DataConfig",
    "RunConfig",
    # Presets and config files
    "PRESETS",
    "get_preset",
    "build_run_config",
    "load_run_config",
    # Data containers
    "Dataset",
    "ImageCollection",
    "ViewRecord",
    "ViewSet",
    "ViewBatch",
    "EmbeddingSet",
    "MetricsRow",
]
