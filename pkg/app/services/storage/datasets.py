"""Dataset sources: CIFAR-10 binary batches and synthetic Gaussian clusters."""

from pathlib import Path
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import ortho_group

from app.core.exceptions import ConfigurationError, ContractError, FormatError
from app.models.config import DataConfig
from app.models.data import Dataset
from app.utils.rng import Stream, stream
from .base import BaseStorageService, PathLike

RECORD_BYTES = 3073
CIFAR_SIDE = 32
CIFAR_CLASSES = 10
TRAIN_BATCHES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_BATCH = "test_batch.bin"
MEAN_RADIUS = 0.25


class DatasetStore(BaseStorageService):
    """Loads labelled image sets from disk or builds them from a seed."""

    def __init__(self):
        super().__init__()

    def load_cifar10_binary(self, path: PathLike) -> Dataset:
        """One binary batch: 1 label byte + 3072 channel-planar pixel bytes per record."""
        raw = self._read_bytes(path)
        if len(raw) % RECORD_BYTES:
            raise FormatError(
                f"{path}: size {len(raw)} is not a multiple of {RECORD_BYTES}", error_code="cifar_size"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
        labels = records[:, 0].astype(np.int64)
        if labels.size and labels.max() >= CIFAR_CLASSES:
            raise FormatError(f"{path}: label {labels.max()} out of range", error_code="cifar_label")
        pixels = records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1)
        self.logger.debug("CIFAR-10 batch loaded", path=str(path), records=len(labels))
        return Dataset(images=pixels.astype(np.float64) / 255.0, labels=labels, num_classes=CIFAR_CLASSES)

    def load_cifar10_split(self, directory: PathLike, split: str = "train") -> Dataset:
        """All five training batches, or the test batch for `val`."""
        names: Sequence[str] = TRAIN_BATCHES if split == "train" else (TEST_BATCH,)
        parts = [self.load_cifar10_binary(Path(directory) / name) for name in names]
        return Dataset(
            images=np.concatenate([p.images for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            split=split,
            num_classes=CIFAR_CLASSES,
        )

    def write_cifar10_binary(self, path: PathLike, pixels: np.ndarray, labels: np.ndarray) -> Path:
        """Inverse of `load_cifar10_binary` for uint8 (N, 32, 32, 3) pixels."""
        pixels = np.asarray(pixels, dtype=np.uint8)
        if pixels.shape[1:] != (CIFAR_SIDE, CIFAR_SIDE, 3) or len(labels) != len(pixels):
            raise ContractError(f"expected (N, 32, 32, 3) pixels, got {pixels.shape}", error_code="cifar_shape")
        records = np.empty((len(pixels), RECORD_BYTES), dtype=np.uint8)
        records[:, 0] = np.asarray(labels, dtype=np.uint8)
        records[:, 1:] = pixels.transpose(0, 3, 1, 2).reshape(len(pixels), -1)
        return self._write_atomic(path, records.tobytes())


def _simplex_means(num_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    vertices = np.eye(num_classes) - 1.0 / num_classes
    vertices *= MEAN_RADIUS / np.sqrt((num_classes - 1) / num_classes)
    padded = np.zeros((num_classes, dim))
    padded[:, :num_classes] = vertices
    return padded @ ortho_group.rvs(dim, random_state=rng)


def _circle_means(num_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Equally spaced points on a circle in the plane of the slowest non-constant wave."""
    grid = 2.0 * np.pi * np.arange(dim) / dim
    plane = np.sqrt(2.0 / dim) * np.stack([np.cos(grid), np.sin(grid)])
    phases = rng.uniform(0.0, 2.0 * np.pi) + 2.0 * np.pi * np.arange(num_classes) / num_classes
    return MEAN_RADIUS * np.stack([np.cos(phases), np.sin(phases)], axis=1) @ plane


def synth_clusters(
    num_classes: int, per_class: int, dim: int, spread: float, seed: int, geometry: str = "simplex"
) -> Dataset:
    """Gaussian clusters around class means at radius 0.25 from 0.5 in every coordinate.

    `simplex` puts the means on a randomly rotated regular simplex, so any two are
    0.25 * sqrt(2K / (K - 1)) apart. `circle` spaces them evenly on a circle spanned
    by one period of a cosine and a sine over the coordinates, so means c and d are
    0.5 * sin(pi * |c - d| / K) apart and all class structure is smooth. Points are
    mean + N(0, spread^2) per coordinate, unclipped, rendered as (1, dim, 1) images.
    """
    if spread is None or spread <= 0:
        raise ConfigurationError(f"spread must be positive, got {spread}", error_code="spread")
    if geometry == "simplex":
        if num_classes < 2 or dim < num_classes:
            raise ConfigurationError(
                f"need 2 <= num_classes <= dim, got {num_classes} classes in {dim} dims", error_code="synth"
            )
        build = _simplex_means
    elif geometry == "circle":
        if num_classes < 2 or dim < 3:
            raise ConfigurationError(
                f"a circle needs >= 2 classes in >= 3 dims, got {num_classes} in {dim}", error_code="synth"
            )
        build = _circle_means
    else:
        raise ConfigurationError(f"unknown synth geometry {geometry!r}", error_code="geometry")
    rng = stream(seed, Stream.SYNTH)
    means = 0.5 + build(num_classes, dim, rng)

    labels = np.repeat(np.arange(num_classes), per_class)
    points = means[labels] + rng.normal(0.0, spread, size=(len(labels), dim))
    images = points.reshape(len(labels), 1, dim, 1)
    return Dataset(images=images, labels=labels, num_classes=num_classes, class_means=means)


def split_dataset(dataset: Dataset, val_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle, then the last `val_fraction` becomes the validation split."""
    order = stream(seed, Stream.SYNTH, 1).permutation(len(dataset))
    cut = len(dataset) - int(round(val_fraction * len(dataset)))
    if cut <= 0 or cut >= len(dataset):
        raise ConfigurationError(f"val_fraction {val_fraction} leaves an empty split", error_code="val_fraction")
    return dataset.subset(order[:cut], split="train"), dataset.subset(order[cut:], split="val")


def load_run_datasets(data: DataConfig, seed: int) -> Tuple[Dataset, Dataset]:
    """(train, val) for a run's data section."""
    if data.source == "synth":
        if data.spread is None:
            raise ConfigurationError(
                "synth spread is not calibrated yet; resolve the run config first", error_code="spread"
            )
        full = synth_clusters(data.num_classes, data.per_class, data.dim, data.spread, seed, data.geometry)
        return split_dataset(full, data.val_fraction, seed)
    if not data.path:
        raise ConfigurationError("cifar10 source needs data.path", error_code="data_path")
    store = DatasetStore()
    return store.load_cifar10_split(data.path, "train"), store.load_cifar10_split(data.path, "val")
