"""Run configuration models.

Every invariant named for a configuration type is enforced by a validator that
raises `ConfigurationError`, so a constructed model is always consistent.
"""

import math
from typing import List, Literal, Optional, Tuple
from pydantic import BaseModel, Field, model_validator
from app.core.exceptions import ConfigurationError

Range = Tuple[float, float]


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value}", error_code="probability")


def _check_area(name: str, area: Range) -> None:
    low, high = area
    if not (0.0 < low <= high <= 1.0):
        raise ConfigurationError(f"{name} must satisfy 0 < min <= max <= 1, got {area}", error_code="area")


class MlpSpec(BaseModel):
    """Layer widths of a ReLU MLP; the last layer is linear."""

    widths: List[int] = Field(description="[input, hidden..., output]")

    @model_validator(mode="after")
    def _check(self):
        if len(self.widths) < 2:
            raise ConfigurationError("an MLP needs at least one layer", error_code="mlp_depth")
        if any(w <= 0 for w in self.widths):
            raise ConfigurationError(f"layer widths must be positive, got {self.widths}", error_code="mlp_width")
        return self

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]


class NetworkSpec(BaseModel):
    """Encoder f/g plus projector h/q, shared by online and target sides."""

    encoder: MlpSpec = Field(default_factory=lambda: MlpSpec(widths=[3072, 256, 256, 64]))
    projector: MlpSpec = Field(default_factory=lambda: MlpSpec(widths=[64, 128, 64]))
    gamma: float = Field(default=0.99, description="EMA coefficient of the target network")
    normalize_embeddings: bool = Field(default=True)

    @model_validator(mode="after")
    def _check(self):
        if self.projector.input_width != self.encoder.output_width:
            raise ConfigurationError(
                f"projector input {self.projector.input_width} != encoder output {self.encoder.output_width}",
                error_code="projector_width",
            )
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}", error_code="gamma")
        return self


class LossConfig(BaseModel):
    """Weights and view counts of the combined objective."""

    objective: Literal["relicv2", "relic", "infonce", "byol"] = Field(default="relicv2")
    alpha: float = Field(default=1.0, description="contrastive weight")
    beta: float = Field(default=1.0, description="invariance weight")
    tau: float = Field(default=0.2, description="temperature")
    n_negatives: int = Field(default=10)
    num_large_crops: int = Field(default=4)
    num_small_crops: int = Field(default=2)

    @model_validator(mode="after")
    def _check(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ConfigurationError(
                f"alpha and beta must be >= 0 and not both zero, got {self.alpha}, {self.beta}",
                error_code="loss_weights",
            )
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}", error_code="tau")
        if self.n_negatives < 1:
            raise ConfigurationError("n_negatives must be positive", error_code="n_negatives")
        if self.num_large_crops < 1:
            raise ConfigurationError("num_large_crops must be >= 1", error_code="crops")
        if self.num_small_crops < 0:
            raise ConfigurationError("num_small_crops must be >= 0", error_code="crops")
        if self.objective == "relic" and (self.num_large_crops, self.num_small_crops) != (2, 0):
            raise ConfigurationError("the relic objective uses exactly 2 large crops", error_code="crops")
        return self

    @property
    def scale(self) -> int:
        return (self.num_large_crops + self.num_small_crops) * self.num_large_crops


class ViewAugmentation(BaseModel):
    """Per-parity augmentation parameters (one column of the view table)."""

    crop_prob: float = Field(default=0.5, description="listed in the table; cropping is always applied")
    flip_prob: float = Field(default=0.5)
    jitter_prob: float = Field(default=0.8)
    grayscale_prob: float = Field(default=0.2)
    blur_prob: float = Field(default=1.0)
    solarize_prob: float = Field(default=0.0)
    brightness: float = Field(default=0.4)
    contrast: float = Field(default=0.4)
    saturation: float = Field(default=0.2)
    hue: float = Field(default=0.1)
    large_area: Range = Field(default=(0.08, 1.0))

    @model_validator(mode="after")
    def _check(self):
        for name in ("crop_prob", "flip_prob", "jitter_prob", "grayscale_prob", "blur_prob", "solarize_prob"):
            _check_probability(name, getattr(self, name))
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} adjustment must be >= 0", error_code="jitter")
        _check_area("large_area", self.large_area)
        return self

    @property
    def jitter_strengths(self) -> Tuple[float, float, float, float]:
        return (self.brightness, self.contrast, self.saturation, self.hue)


def _odd_view() -> ViewAugmentation:
    return ViewAugmentation(blur_prob=0.1, solarize_prob=0.2, large_area=(0.14, 1.0))


class AugmentationConfig(BaseModel):
    """Multi-crop, photometric and saliency-mask parameters."""

    even: ViewAugmentation = Field(default_factory=ViewAugmentation)
    odd: ViewAugmentation = Field(default_factory=_odd_view)
    small_area: Range = Field(default=(0.05, 0.14))
    aspect_range: Range = Field(default=(3.0 / 4.0, 4.0 / 3.0))
    large_size: int = Field(default=32)
    small_size: int = Field(default=16)
    crops_enabled: bool = Field(default=True, description="disable for vector data")
    blur_kernel: int = Field(default=23)
    blur_sigma: Range = Field(default=(0.1, 2.0))
    solarize_mode: Literal["binarize", "standard"] = Field(default="binarize")
    mask_prob: float = Field(default=0.1)
    foreground_threshold: float = Field(default=0.05)
    mask_transform: Literal[
        "none",
        "random_points",
        "random_rectangle",
        "centered_rectangle",
        "add_rectangle",
        "remove_rectangle",
        "bounding_box",
    ] = Field(default="none")
    mask_area: float = Field(default=0.5)

    @model_validator(mode="after")
    def _check(self):
        _check_probability("mask_prob", self.mask_prob)
        _check_probability("foreground_threshold", self.foreground_threshold)
        _check_area("small_area", self.small_area)
        if not 0.0 < self.mask_area <= 1.0:
            raise ConfigurationError("mask_area must lie in (0, 1]", error_code="area")
        low, high = self.aspect_range
        if not 0.0 < low <= high:
            raise ConfigurationError(f"invalid aspect range {self.aspect_range}", error_code="aspect")
        if self.small_size <= 0 or self.large_size <= self.small_size:
            raise ConfigurationError(
                f"need large_size > small_size > 0, got {self.large_size}, {self.small_size}",
                error_code="crop_size",
            )
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ConfigurationError("blur_kernel must be a positive odd integer", error_code="blur")
        if not 0.0 < self.blur_sigma[0] <= self.blur_sigma[1]:
            raise ConfigurationError(f"invalid blur sigma range {self.blur_sigma}", error_code="blur")
        return self

    def parity_params(self, parity: str) -> ViewAugmentation:
        return self.odd if parity == "odd" else self.even


class ScheduleConfig(BaseModel):
    """Warmup plus cosine decay without restarts."""

    base_lr: float = Field(default=0.15)
    total_steps: int = Field(default=2000)
    warmup_steps: int = Field(default=20)
    batch_size: int = Field(default=128)

    @model_validator(mode="after")
    def _check(self):
        if self.base_lr < 0:
            raise ConfigurationError("base_lr must be >= 0", error_code="lr")
        if self.total_steps < 0 or self.warmup_steps < 0 or self.warmup_steps > self.total_steps:
            raise ConfigurationError(
                f"need 0 <= warmup_steps <= total_steps, got {self.warmup_steps}, {self.total_steps}",
                error_code="schedule",
            )
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2", error_code="batch_size")
        return self


class LarsConfig(BaseModel):
    """Layer-wise adaptive rate scaling."""

    momentum: float = Field(default=0.9)
    weight_decay: float = Field(default=1.5e-6)
    trust_coefficient: float = Field(default=1e-3)
    exclude: List[str] = Field(default_factory=lambda: ["bias"], description="name fragments skipping decay and trust scaling")
    exclude_vectors: bool = Field(default=True, description="also skip every 1-d parameter")

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}", error_code="momentum")
        if self.trust_coefficient <= 0:
            raise ConfigurationError("trust_coefficient must be positive", error_code="trust")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0", error_code="weight_decay")
        return self

    def is_excluded(self, name: str, ndim: int) -> bool:
        return any(fragment in name for fragment in self.exclude) or (self.exclude_vectors and ndim == 1)


class ProbeConfig(BaseModel):
    """Linear evaluation: SGD with Nesterov momentum, no weight decay."""

    epochs: int = Field(default=100)
    batch_size: int = Field(default=256)
    lr: float = Field(default=0.1)
    momentum: float = Field(default=0.9)
    scaling: Literal["feature", "global", "none"] = Field(
        default="feature", description="per-feature standardization, one shared scale, or raw features"
    )
    labels_per_class: Optional[int] = Field(default=None, description="label budget per class; None uses every label")
    seed: int = Field(default=0)
    knn_k: int = Field(default=20)

    @model_validator(mode="after")
    def _check(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("probe epochs and batch_size must be positive", error_code="probe")
        if self.lr < 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("invalid probe lr/momentum", error_code="probe")
        if self.labels_per_class is not None and self.labels_per_class < 1:
            raise ConfigurationError("labels_per_class must be positive", error_code="probe")
        if self.knn_k < 1:
            raise ConfigurationError("knn_k must be positive", error_code="knn_k")
        return self


class DataConfig(BaseModel):
    """Where the images come from."""

    source: Literal["synth", "cifar10"] = Field(default="cifar10")
    path: Optional[str] = Field(default="data/cifar-10-batches-bin", description="CIFAR-10 binary directory")
    masks_path: Optional[str] = Field(default=None, description="SMSK mask file for the train split")
    num_classes: int = Field(default=8)
    per_class: int = Field(default=500)
    dim: int = Field(default=32)
    geometry: Literal["simplex", "circle"] = Field(default="simplex", description="placement of the class means")
    spread: Optional[float] = Field(default=0.1, description="None: calibrate against raw_probe_target")
    raw_probe_target: float = Field(default=0.82, description="raw-input probe top-1 the calibrated spread aims at")
    val_fraction: float = Field(default=0.2)

    @model_validator(mode="after")
    def _check(self):
        if self.source == "synth":
            if self.spread is not None and self.spread <= 0:
                raise ConfigurationError("synth spread must be positive", error_code="spread")
            if self.num_classes < 2 or self.per_class < 2 or self.dim < 1:
                raise ConfigurationError("synth needs >= 2 classes of >= 2 points", error_code="synth")
            if not 0.0 < self.raw_probe_target < 1.0:
                raise ConfigurationError("raw_probe_target must lie in (0, 1)", error_code="raw_probe_target")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in (0, 1)", error_code="val_fraction")
        return self


class RunConfig(BaseModel):
    """Everything a pretraining run depends on."""

    preset: str = Field(default="custom")
    seed: int = Field(default=0)
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    loss: LossConfig = Field(default_factory=LossConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    lars: LarsConfig = Field(default_factory=LarsConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    checkpoint_every: int = Field(default=500)
    log_every: int = Field(default=1)

    @model_validator(mode="after")
    def _check(self):
        expected = math.prod(self.view_shape)
        if self.network.encoder.input_width != expected:
            raise ConfigurationError(
                f"encoder input {self.network.encoder.input_width} != view size {expected} {self.view_shape}",
                error_code="encoder_input",
            )
        if self.loss.objective != "infonce" and self.loss.n_negatives > self.schedule.batch_size - 1:
            raise ConfigurationError(
                f"n_negatives {self.loss.n_negatives} exceeds batch_size - 1 = {self.schedule.batch_size - 1}",
                error_code="n_negatives",
            )
        if self.data.source == "synth" and self.augmentation.crops_enabled:
            raise ConfigurationError("geometric crops must be disabled for synth vectors", error_code="crops")
        if self.loss.objective == "relic" and self.augmentation.mask_prob > 0:
            raise ConfigurationError("the relic objective runs without saliency masking", error_code="mask_prob")
        if self.checkpoint_every < 0 or self.log_every < 1:
            raise ConfigurationError("invalid checkpoint/log cadence", error_code="cadence")
        return self

    @property
    def view_shape(self) -> Tuple[int, int, int]:
        """(H, W, C) of every view handed to the encoder."""
        if self.data.source == "synth":
            return (1, self.data.dim, 1)
        size = self.augmentation.large_size
        return (size, size, 3)
