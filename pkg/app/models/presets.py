"""Named run presets and the flat key=value config file loader."""

from pathlib import Path
from typing import Any, Callable, Dict, Union, get_origin

import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from app.core.exceptions import ConfigurationError
from app.models.config import RunConfig

logger = structlog.get_logger()


def _synth() -> Dict[str, Any]:
    # Blur at a random strength on every view; flips and solarization would mix the classes.
    view = {
        "flip_prob": 0.0,
        "jitter_prob": 0.8,
        "brightness": 0.2,
        "contrast": 0.4,
        "saturation": 0.0,
        "hue": 0.0,
        "grayscale_prob": 0.0,
        "blur_prob": 1.0,
        "solarize_prob": 0.0,
    }
    return {
        "preset": "synth",
        "data": {
            "source": "synth",
            "num_classes": 8,
            "per_class": 500,
            "dim": 32,
            "geometry": "circle",
            "spread": None,
            "raw_probe_target": 0.82,
        },
        "network": {
            "encoder": {"widths": [32, 128, 32]},
            "projector": {"widths": [32, 64, 32]},
            "gamma": 0.99,
        },
        "loss": {"num_large_crops": 2, "num_small_crops": 1, "n_negatives": 10, "tau": 0.2},
        "augmentation": {
            "crops_enabled": False,
            "mask_prob": 0.0,
            "even": dict(view),
            "odd": dict(view),
            "blur_sigma": (0.1, 3.0),
        },
        "schedule": {"base_lr": 0.15, "total_steps": 2000, "warmup_steps": 100, "batch_size": 128},
        "lars": {"trust_coefficient": 1e-2},
        "probe": {"epochs": 100, "labels_per_class": 2, "scaling": "global", "knn_k": 1},
    }


def _cifar_small() -> Dict[str, Any]:
    return {
        "preset": "cifar-small",
        "data": {"source": "cifar10", "path": "data/cifar-10-batches-bin"},
        "network": {
            "encoder": {"widths": [32 * 32 * 3, 256, 256, 64]},
            "projector": {"widths": [64, 128, 64]},
        },
        "loss": {"num_large_crops": 4, "num_small_crops": 2},
        "augmentation": {"large_size": 32, "small_size": 16},
        "schedule": {"base_lr": 0.15, "total_steps": 39000, "warmup_steps": 390, "batch_size": 128},
    }


def _imagenet() -> Dict[str, Any]:
    config = _cifar_small()
    config.update(
        preset="imagenet",
        network={
            "encoder": {"widths": [224 * 224 * 3, 256, 256, 64]},
            "projector": {"widths": [64, 128, 64]},
        },
        augmentation={"large_size": 224, "small_size": 96},
        schedule={"base_lr": 0.3 * 4096 / 256, "total_steps": 312000, "warmup_steps": 3120, "batch_size": 4096},
    )
    return config


def _jft() -> Dict[str, Any]:
    config = _cifar_small()
    config.update(preset="jft")
    config["loss"] = {"alpha": 0.3, "beta": 2.0, "tau": 0.2, "num_large_crops": 4, "num_small_crops": 2}
    config["schedule"] = dict(config["schedule"], base_lr=0.3)
    return config


def _synth_no_invariance() -> Dict[str, Any]:
    config = _synth()
    config["preset"] = "synth-no-invariance"
    config["loss"] = dict(config["loss"], beta=0.0)
    return config


def _synth_frozen_target() -> Dict[str, Any]:
    config = _synth()
    config["preset"] = "synth-frozen-target"
    config["network"] = dict(config["network"], gamma=1.0)
    return config


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    "synth": _synth,
    "cifar-small": _cifar_small,
    "imagenet": _imagenet,
    "jft": _jft,
    "synth-no-invariance": _synth_no_invariance,
    "synth-frozen-target": _synth_frozen_target,
}


def _validate(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run config: {e}", error_code="validation")


def preset_dict(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}", error_code="preset"
        )
    return PRESETS[name]()


def get_preset(name: str) -> RunConfig:
    """Build a validated preset."""
    return _validate(preset_dict(name))


def _parse_value(raw: str) -> Any:
    """Scalars stay strings for pydantic to coerce; commas make lists."""
    text = raw.strip()
    if "," in text:
        return [part.strip() for part in text.split(",") if part.strip()]
    return text


_MISSING = object()


def _leaf_annotation(path: list) -> Any:
    """Annotation of the field a dotted path names, or _MISSING."""
    schema: Any = RunConfig
    annotation: Any = _MISSING
    for part in path:
        fields = getattr(schema, "model_fields", None)
        if fields is None or part not in fields:
            return _MISSING
        annotation = fields[part].annotation
        schema = annotation if hasattr(annotation, "model_fields") else None
    return annotation


def _coerce(annotation: Any, value: Any) -> Any:
    """A bare string for a list field becomes a one-item list."""
    if get_origin(annotation) is list and isinstance(value, str):
        return [value.strip()]
    return value


def apply_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Write dotted `section.field=value` overrides into a nested config dict."""
    merged = RunConfig.model_validate(base).model_dump() if base else RunConfig().model_dump()
    for key, value in overrides.items():
        path = key.split(".")
        annotation = _leaf_annotation(path)
        if annotation is _MISSING:
            raise ConfigurationError(f"unknown config key {key!r}", error_code="unknown_key")
        cursor = merged
        for part in path[:-1]:
            cursor = cursor[part]
        cursor[path[-1]] = _coerce(annotation, value)
    return merged


def build_run_config(overrides: Dict[str, Any], preset: str = None) -> RunConfig:
    """Preset (or defaults) plus dotted overrides, validated."""
    try:
        base = preset_dict(preset) if preset else {}
        merged = apply_overrides(base, overrides)
    except ValidationError as e:
        raise ConfigurationError(f"invalid preset: {e}", error_code="validation")
    if preset:
        merged["preset"] = preset
    return _validate(merged)


def load_run_config(path: Union[str, Path], overrides: Dict[str, Any] = None) -> RunConfig:
    """Parse a flat key=value config file.

    The optional `preset` key picks the base; every other key is a dotted path
    into `RunConfig`, e.g. `loss.beta=0.0` or `augmentation.odd.blur_prob=0.1`.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}", error_code="missing_config")
    try:
        raw = dotenv_values(path)
    except Exception as e:
        raise ConfigurationError(f"unreadable config file {path}: {e}", error_code="parse")

    values = {key: _parse_value(value) for key, value in raw.items() if value is not None}
    preset = values.pop("preset", None)
    values.update(overrides or {})
    logger.info("Loaded run config", path=str(path), preset=preset, overrides=len(values))
    return build_run_config(values, preset=preset)
