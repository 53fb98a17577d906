"""Data containers: datasets, augmented views and embedding sets.

Images are float64 arrays of shape (H, W, C) with values in [0, 1]; saliency
masks are uint8 arrays of shape (H, W) holding 0/1.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError, ContractError, DimensionError

Image = np.ndarray
SaliencyMask = np.ndarray


@dataclass
class ImageCollection:
    """The label-free view of a dataset handed to pretraining."""

    images: np.ndarray
    masks: Optional[np.ndarray] = None
    split: str = "train"

    def __len__(self) -> int:
        return len(self.images)

    def mask_for(self, index: int) -> Optional[SaliencyMask]:
        return None if self.masks is None else self.masks[index]


@dataclass
class Dataset:
    """Images with optional labels and saliency masks."""

    images: np.ndarray
    labels: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None
    split: str = "train"
    num_classes: int = 10
    class_means: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DimensionError(
                f"images must be (N, H, W, C), got {self.images.shape}", error_code="images"
            )
        if self.labels is not None:
            if len(self.labels) != len(self.images):
                raise ContractError("labels must align 1:1 with images", error_code="labels")
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ContractError(
                    f"labels must lie in [0, {self.num_classes})", error_code="labels"
                )
        if self.masks is not None and self.masks.shape != self.images.shape[:3]:
            raise DimensionError(
                f"masks {self.masks.shape} do not align with images {self.images.shape}",
                error_code="masks",
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def unlabeled(self) -> ImageCollection:
        """Drop the labels; the result has no field that could carry them."""
        return ImageCollection(images=self.images, masks=self.masks, split=self.split)

    def subset(self, indices: np.ndarray, split: Optional[str] = None) -> "Dataset":
        return Dataset(
            images=self.images[indices],
            labels=None if self.labels is None else self.labels[indices],
            masks=None if self.masks is None else self.masks[indices],
            split=split or self.split,
            num_classes=self.num_classes,
            class_means=self.class_means,
        )

    def with_masks(self, masks: np.ndarray) -> "Dataset":
        return Dataset(
            images=self.images,
            labels=self.labels,
            masks=masks,
            split=self.split,
            num_classes=self.num_classes,
            class_means=self.class_means,
        )


@dataclass
class ViewRecord:
    """Provenance of one augmented view."""

    kind: str  # large, small
    index: int
    parity: str  # odd, even
    mask_applied: bool = False
    flipped: bool = False
    jittered: bool = False
    grayscaled: bool = False
    blurred: bool = False
    solarized: bool = False
    jitter_order: Tuple[int, ...] = ()
    crop_box: Optional[Tuple[int, int, int, int]] = None  # top, left, height, width


@dataclass
class ViewSet:
    """All views of one image."""

    large_views: List[Image]
    small_views: List[Image]
    records: List[ViewRecord]
    stream_id: Tuple[int, ...] = ()

    @property
    def mask_applied(self) -> List[bool]:
        return [r.mask_applied for r in self.records if r.kind == "large"]


@dataclass
class ViewBatch:
    """Views for B images, image-major."""

    entries: List[ViewSet] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_large(self) -> int:
        return len(self.entries[0].large_views) if self.entries else 0

    @property
    def num_small(self) -> int:
        return len(self.entries[0].small_views) if self.entries else 0

    def _matrix(self, views: List[Image], view_shape: Tuple[int, int, int]) -> np.ndarray:
        # Imported here: augmentation imports this module for its types
        from app.business.augmentation import resize_bicubic

        rows = []
        for view in views:
            if view.shape != tuple(view_shape):
                if view.shape[2] != view_shape[2]:
                    raise DimensionError(
                        f"view channels {view.shape} do not match encoder input {view_shape}",
                        error_code="view_shape",
                    )
                view = resize_bicubic(view, view_shape[0], view_shape[1])
            rows.append(view.reshape(-1))
        return np.stack(rows) if rows else np.zeros((0, int(np.prod(view_shape))))

    def large_matrix(self, view_shape: Tuple[int, int, int]) -> np.ndarray:
        """Flattened large views; row b*L + l is view l of image b."""
        views = [v for entry in self.entries for v in entry.large_views]
        return self._matrix(views, view_shape)

    def small_matrix(self, view_shape: Tuple[int, int, int]) -> np.ndarray:
        """Flattened small views, resized to the encoder input; row b*S + s."""
        views = [v for entry in self.entries for v in entry.small_views]
        return self._matrix(views, view_shape)


@dataclass
class EmbeddingSet:
    """Vectors with class labels, for latent-space analysis."""

    vectors: np.ndarray
    labels: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.vectors.ndim != 2 or len(self.vectors) < 2:
            raise ConfigurationError(
                f"an embedding set needs N >= 2 vectors of one width, got {self.vectors.shape}",
                error_code="embedding_set",
            )
        if len(self.labels) != len(self.vectors):
            raise ContractError("labels must align 1:1 with vectors", error_code="labels")

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class MetricsRow:
    """One line of the training metrics log."""

    step: int
    lr: float
    loss: float
    contrastive: float
    invariance: float
    grad_norm: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "step": self.step,
            "lr": self.lr,
            "loss": self.loss,
            "contrastive": self.contrastive,
            "invariance": self.invariance,
            "grad_norm": self.grad_norm,
        }
