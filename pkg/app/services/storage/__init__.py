"""Storage services package."""

from .base import BaseStorageService
from .checkpoints import CheckpointStore, RunState
from .datasets import DatasetStore, load_run_datasets, split_dataset, synth_clusters
from .masks import MaskStore
from .metrics import MetricsLog

__all__ = [
    "BaseStorageService",
    "CheckpointStore",
    "RunState",
    "DatasetStore",
    "load_run_datasets",
    "split_dataset",
    "synth_clusters",
    "MaskStore",
    "MetricsLog",
]
