"""Heuristic foreground masks and the mask corruptions used in ablations."""

import math
from typing import Optional

import numpy as np
from skimage.filters import threshold_otsu
from skimage.measure import label

from app.core.exceptions import ConfigurationError, ContractError
from app.models.data import Image, SaliencyMask


def heuristic_saliency(img: Image) -> SaliencyMask:
    """Otsu split of the L1 distance to the border colour, largest component kept."""
    if img.ndim != 3:
        raise ContractError(f"expected (H, W, C), got {img.shape}", error_code="image_shape")
    ring = np.concatenate([img[0], img[-1], img[:, 0], img[:, -1]], axis=0)
    deviation = np.abs(img - ring.mean(axis=0)).sum(axis=2)
    if np.ptp(deviation) <= 1e-12:
        return np.zeros(img.shape[:2], dtype=np.uint8)
    foreground = deviation > threshold_otsu(deviation)
    components = label(foreground, connectivity=2)
    if components.max() == 0:
        return np.zeros(img.shape[:2], dtype=np.uint8)
    sizes = np.bincount(components.ravel())
    sizes[0] = 0
    return (components == sizes.argmax()).astype(np.uint8)


def _rectangle(shape, area: float) -> np.ndarray:
    """Centred square of the given pixel area, clipped to the image."""
    height, width = shape
    side = math.sqrt(area)
    h = int(min(height, max(1, round(side))))
    w = int(min(width, max(1, round(side))))
    return _clip_box(shape, (height - h) // 2, (width - w) // 2, h, w)


def random_points(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    return (rng.uniform(size=mask.shape) < area).astype(np.uint8)


def random_rectangle(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    height, width = mask.shape
    side = math.sqrt(area * height * width)
    h = int(min(height, max(1, round(side))))
    w = int(min(width, max(1, round(side))))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return _clip_box(mask.shape, top, left, h, w)


def _clip_box(shape, top: int, left: int, h: int, w: int) -> np.ndarray:
    rect = np.zeros(shape, dtype=np.uint8)
    rect[top : top + h, left : left + w] = 1
    return rect


def centered_rectangle(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    return _rectangle(mask.shape, area * mask.size)


def add_rectangle(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    foreground = int(mask.sum())
    if foreground == 0:
        return mask.copy()
    return np.maximum(mask, _rectangle(mask.shape, area * foreground)).astype(np.uint8)


def remove_rectangle(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    foreground = int(mask.sum())
    if foreground == 0:
        return mask.copy()
    return (mask * (1 - _rectangle(mask.shape, area * foreground))).astype(np.uint8)


def bounding_box(mask: SaliencyMask, area: float, rng: np.random.Generator) -> SaliencyMask:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return mask.copy()
    return _clip_box(mask.shape, rows[0], cols[0], rows[-1] - rows[0] + 1, cols[-1] - cols[0] + 1)


MASK_TRANSFORMS = {
    "random_points": random_points,
    "random_rectangle": random_rectangle,
    "centered_rectangle": centered_rectangle,
    "add_rectangle": add_rectangle,
    "remove_rectangle": remove_rectangle,
    "bounding_box": bounding_box,
}


def transform_mask(
    mask: Optional[SaliencyMask], name: str, area: float, rng: np.random.Generator
) -> SaliencyMask:
    """Apply the configured corruption; `none` returns the mask untouched."""
    if mask is None:
        raise ContractError("no saliency mask to transform", error_code="mask_missing")
    if name == "none":
        return mask
    try:
        transform = MASK_TRANSFORMS[name]
    except KeyError:
        raise ConfigurationError(f"unknown mask transform {name!r}", error_code="mask_transform")
    return transform(np.asarray(mask, dtype=np.uint8), area, rng)
