"""View generation: multi-crop, photometric pipeline and background removal.

Every random decision of a view is drawn from the image's own generator in a
fixed order, so identical (image, stream, config) inputs give bit-identical
views whatever the thread count:

    per view: mask gate, [mask transform, grey level], flip, jitter gate,
    jitter order, jitter factors, grayscale gate, blur gate, blur sigma,
    solarize gate, crop geometry.

Plan draws are always made even when the corresponding step is disabled.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.ndimage import convolve1d
from skimage.color import hsv2rgb, rgb2hsv

from app.core.exceptions import ConfigurationError, ContractError
from app.models.config import AugmentationConfig, LossConfig, ViewAugmentation
from app.models.data import Image, ImageCollection, SaliencyMask, ViewBatch, ViewRecord, ViewSet
from app.utils.rng import Stream, stream

logger = structlog.get_logger()

GRAY_COEFFS = np.array([0.2989, 0.5870, 0.1140])
CROP_ATTEMPTS = 10
JITTER_OPS = ("brightness", "contrast", "saturation", "hue")


# Geometry


def _keys(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel."""
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _bicubic_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] interpolation matrix, half-pixel centres, clamped taps."""
    weights = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    rows = np.arange(n_out)
    for offset in (-1, 0, 1, 2):
        taps = np.clip(base + offset, 0, n_in - 1)
        np.add.at(weights, (rows, taps), _keys(frac - offset))
    return weights


def resize_bicubic(img: Image, height: int, width: int) -> Image:
    """Separable bicubic resize with edge clamping; output clamped to [0, 1]."""
    if height <= 0 or width <= 0:
        raise ConfigurationError(f"output size must be positive, got {height}x{width}", error_code="crop_size")
    if img.shape[:2] == (height, width):
        return img.copy()
    rows = _bicubic_weights(img.shape[0], height)
    cols = _bicubic_weights(img.shape[1], width)
    out = np.einsum("oh,hwc->owc", rows, img)
    out = np.einsum("pw,owc->opc", cols, out)
    return np.clip(out, 0.0, 1.0)


def sample_crop_box(
    height: int, width: int, area_range: Tuple[float, float], aspect_range: Tuple[float, float], rng: np.random.Generator
) -> Tuple[int, int, int, int]:
    """(top, left, h, w): area uniform, aspect log-uniform, centre fallback."""
    area = height * width
    log_low, log_high = math.log(aspect_range[0]), math.log(aspect_range[1])
    for _ in range(CROP_ATTEMPTS):
        target = rng.uniform(*area_range) * area
        aspect = math.exp(rng.uniform(log_low, log_high))
        w = int(round(math.sqrt(target * aspect)))
        h = int(round(math.sqrt(target / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w

    # Centre crop of the largest feasible area within the aspect range
    ratio = width / height
    if ratio < aspect_range[0]:
        w, h = width, int(round(width / aspect_range[0]))
    elif ratio > aspect_range[1]:
        h, w = height, int(round(height * aspect_range[1]))
    else:
        h, w = height, width
    return (height - h) // 2, (width - w) // 2, h, w


def random_resized_crop(
    img: Image,
    out_size: int,
    area_range: Tuple[float, float],
    aspect_range: Tuple[float, float],
    rng: np.random.Generator,
) -> Image:
    if out_size <= 0:
        raise ConfigurationError(f"crop size must be positive, got {out_size}", error_code="crop_size")
    top, left, h, w = sample_crop_box(img.shape[0], img.shape[1], area_range, aspect_range, rng)
    return resize_bicubic(img[top : top + h, left : left + w], out_size, out_size)


# Photometric operations


def _luminance(img: Image) -> np.ndarray:
    """(H, W) grey level; the image itself for one channel."""
    if img.shape[2] == 1:
        return img[..., 0]
    return img @ GRAY_COEFFS


def adjust_brightness(img: Image, delta: float) -> Image:
    return np.clip(img + delta, 0.0, 1.0)


def adjust_contrast(img: Image, delta: float) -> Image:
    mean = _luminance(img).mean()
    return np.clip((img - mean) * (1.0 + delta) + mean, 0.0, 1.0)


def adjust_saturation(img: Image, delta: float) -> Image:
    gray = _luminance(img)[..., None]
    return np.clip(gray + (img - gray) * (1.0 + delta), 0.0, 1.0)


def adjust_hue(img: Image, delta: float) -> Image:
    """Rotate hue by `delta` turns."""
    hsv = rgb2hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + delta, 1.0)
    return np.clip(hsv2rgb(hsv), 0.0, 1.0)


def _apply_jitter(img: Image, order: Sequence[int], factors: Sequence[float], strengths: Sequence[float]) -> Image:
    ops = (adjust_brightness, adjust_contrast, adjust_saturation, adjust_hue)
    for k in order:
        # saturation and hue have no meaning for one channel
        if strengths[k] == 0 or (k >= 2 and img.shape[2] == 1):
            continue
        img = ops[k](img, factors[k])
    return img


def color_jitter(img: Image, strengths: Sequence[float], rng: np.random.Generator) -> Image:
    """Brightness, contrast, saturation, hue in random order, each by U[-a, a]."""
    strengths = np.asarray(strengths, dtype=np.float64)
    order = rng.permutation(4)
    factors = rng.uniform(-1.0, 1.0, size=4) * strengths
    return _apply_jitter(img, order, factors, strengths)


def to_grayscale(img: Image) -> Image:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"grayscale needs an RGB image, got shape {img.shape}", error_code="channels")
    gray = img @ GRAY_COEFFS
    return np.repeat(gray[..., None], 3, axis=2)


def _blur_kernel(sigma: float, size: int) -> np.ndarray:
    x = np.arange(size) - size // 2
    kernel = np.exp(-(x**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def blur_with_sigma(img: Image, sigma: float, max_kernel: int = 23) -> Image:
    """Separable Gaussian blur with replicate padding."""
    out = img
    for axis in (0, 1):
        side = img.shape[axis]
        size = min(max_kernel, side if side % 2 else side - 1)
        if size <= 1:
            continue
        out = convolve1d(out, _blur_kernel(sigma, size), axis=axis, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def gaussian_blur(
    img: Image,
    rng: np.random.Generator,
    sigma_range: Tuple[float, float] = (0.1, 2.0),
    max_kernel: int = 23,
) -> Image:
    return blur_with_sigma(img, rng.uniform(*sigma_range), max_kernel)


def solarize(img: Image, mode: str = "binarize") -> Image:
    """binarize binarizes at 0.5; standard inverts values >= 0.5."""
    if mode == "binarize":
        return np.where(img < 0.5, 0.0, 1.0)
    if mode == "standard":
        return np.where(img >= 0.5, 1.0 - img, img)
    raise ConfigurationError(f"unknown solarize mode {mode!r}", error_code="solarize_mode")


def apply_saliency_mask(
    img: Image, mask: SaliencyMask, rng: np.random.Generator, foreground_threshold: float = 0.05
) -> Image:
    """Paint the background one uniform grey level; tiny foregrounds are left alone."""
    if mask.shape != img.shape[:2]:
        raise ContractError(
            f"mask {mask.shape} does not match image {img.shape[:2]}", error_code="mask_shape"
        )
    level = rng.uniform()
    if mask.mean() < foreground_threshold:
        return img.copy()
    return np.where(mask[..., None].astype(bool), img, level)


# View plans


@dataclass
class ViewPlan:
    """Every photometric decision for one view, drawn before any pixel work."""

    flip: bool
    jitter: bool
    jitter_order: Tuple[int, ...]
    jitter_factors: Tuple[float, ...]
    grayscale: bool
    blur: bool
    blur_sigma: float
    solarize: bool


def sample_view_plan(params: ViewAugmentation, aug_cfg: AugmentationConfig, rng: np.random.Generator) -> ViewPlan:
    flip = rng.uniform() < params.flip_prob
    jitter = rng.uniform() < params.jitter_prob
    order = tuple(int(k) for k in rng.permutation(4))
    factors = tuple(rng.uniform(-1.0, 1.0, size=4) * np.asarray(params.jitter_strengths))
    grayscale = rng.uniform() < params.grayscale_prob
    blur = rng.uniform() < params.blur_prob
    sigma = float(rng.uniform(*aug_cfg.blur_sigma))
    solar = rng.uniform() < params.solarize_prob
    return ViewPlan(
        flip=bool(flip),
        jitter=bool(jitter),
        jitter_order=order,
        jitter_factors=factors,
        grayscale=bool(grayscale),
        blur=bool(blur),
        blur_sigma=sigma,
        solarize=bool(solar),
    )


def _execute_plan(img: Image, plan: ViewPlan, params: ViewAugmentation, aug_cfg: AugmentationConfig) -> Image:
    if plan.flip:
        img = img[:, ::-1]
    if plan.jitter:
        img = _apply_jitter(img, plan.jitter_order, plan.jitter_factors, params.jitter_strengths)
    if plan.grayscale and img.shape[2] == 3:
        img = to_grayscale(img)
    if plan.blur:
        img = blur_with_sigma(img, plan.blur_sigma, aug_cfg.blur_kernel)
    if plan.solarize:
        img = solarize(img, aug_cfg.solarize_mode)
    return np.ascontiguousarray(np.clip(img, 0.0, 1.0))


def _make_view(
    img: Image,
    mask: Optional[SaliencyMask],
    kind: str,
    index: int,
    parity: str,
    area_range: Tuple[float, float],
    size: int,
    aug_cfg: AugmentationConfig,
    rng: np.random.Generator,
) -> Tuple[Image, ViewRecord]:
    from app.business.saliency import transform_mask

    params = aug_cfg.parity_params(parity)
    masked = kind == "large" and rng.uniform() < aug_cfg.mask_prob
    source = img
    if masked:
        view_mask = transform_mask(mask, aug_cfg.mask_transform, aug_cfg.mask_area, rng)
        source = apply_saliency_mask(img, view_mask, rng, aug_cfg.foreground_threshold)

    plan = sample_view_plan(params, aug_cfg, rng)

    box = None
    if aug_cfg.crops_enabled:
        box = sample_crop_box(img.shape[0], img.shape[1], area_range, aug_cfg.aspect_range, rng)
        top, left, h, w = box
        source = resize_bicubic(source[top : top + h, left : left + w], size, size)

    view = _execute_plan(source, plan, params, aug_cfg)
    record = ViewRecord(
        kind=kind,
        index=index,
        parity=parity,
        mask_applied=masked,
        flipped=plan.flip,
        jittered=plan.jitter,
        grayscaled=plan.grayscale and img.shape[2] == 3,
        blurred=plan.blur,
        solarized=plan.solarize,
        jitter_order=plan.jitter_order,
        crop_box=box,
    )
    return view, record


def generate_views(
    img: Image,
    mask: Optional[SaliencyMask],
    aug_cfg: AugmentationConfig,
    loss_cfg: LossConfig,
    rng: np.random.Generator,
    warn: bool = True,
) -> ViewSet:
    """L large then S small views of one image.

    Large view k (1-based) uses odd parameters for odd k; small views alternate
    starting with odd. Only large views are candidates for background removal.
    """
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ContractError(f"images must be (H, W, 1|3), got {img.shape}", error_code="image_shape")
    if aug_cfg.mask_prob > 0 and mask is None:
        from app.business.saliency import heuristic_saliency

        if warn:
            logger.warning("Saliency mask missing, using heuristic mask", shape=img.shape)
        mask = heuristic_saliency(img)

    large, small, records = [], [], []
    for k in range(loss_cfg.num_large_crops):
        parity = "odd" if k % 2 == 0 else "even"
        area = aug_cfg.parity_params(parity).large_area
        view, record = _make_view(img, mask, "large", k, parity, area, aug_cfg.large_size, aug_cfg, rng)
        large.append(view)
        records.append(record)
    for k in range(loss_cfg.num_small_crops):
        parity = "odd" if k % 2 == 0 else "even"
        view, record = _make_view(
            img, mask, "small", k, parity, aug_cfg.small_area, aug_cfg.small_size, aug_cfg, rng
        )
        small.append(view)
        records.append(record)
    return ViewSet(large_views=large, small_views=small, records=records)


def build_view_batch(
    images: ImageCollection,
    indices: Sequence[int],
    aug_cfg: AugmentationConfig,
    loss_cfg: LossConfig,
    seed: int,
    step: int,
    num_workers: int = 1,
) -> ViewBatch:
    """Views for a batch; image i draws from stream (seed, AUGMENT, step, i)."""
    if aug_cfg.mask_prob > 0 and images.masks is None:
        logger.warning("Saliency masks missing, using heuristic masks", step=step, batch=len(indices))

    def one(index: int) -> ViewSet:
        rng = stream(seed, Stream.AUGMENT, step, int(index))
        views = generate_views(images.images[index], images.mask_for(index), aug_cfg, loss_cfg, rng, warn=False)
        views.stream_id = (int(Stream.AUGMENT), step, int(index))
        return views

    if num_workers > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            entries: List[ViewSet] = list(pool.map(one, indices))
    else:
        entries = [one(i) for i in indices]
    return ViewBatch(entries=entries)
