"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from app.models.config import (
    AugmentationConfig,
    LossConfig,
    MlpSpec,
    NetworkSpec,
    ScheduleConfig,
    ViewAugmentation,
)
from app.models.presets import build_run_config
from app.business.networks import init_network_pair
from app.services.storage import synth_clusters


@pytest.fixture
def rng():
    """A fresh seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """Encoder 6 -> 5 -> 4, projector 4 -> 4 -> 3."""
    return NetworkSpec(
        encoder=MlpSpec(widths=[6, 5, 4]),
        projector=MlpSpec(widths=[4, 4, 3]),
        gamma=0.9,
    )


@pytest.fixture
def tiny_net(tiny_spec):
    """A seeded network pair over 1x6x1 views."""
    return init_network_pair(tiny_spec, seed=7)


@pytest.fixture
def plain_augmentation():
    """Vector-friendly augmentation: no crops, no masks, brightness/contrast only."""
    quiet = dict(saturation=0.0, hue=0.0, grayscale_prob=0.0, solarize_prob=0.0, blur_prob=0.0)
    return AugmentationConfig(
        crops_enabled=False,
        mask_prob=0.0,
        even=ViewAugmentation(**quiet),
        odd=ViewAugmentation(**quiet),
    )


@pytest.fixture
def small_loss():
    """L=2, S=1, three negatives."""
    return LossConfig(num_large_crops=2, num_small_crops=1, n_negatives=3, tau=0.5)


@pytest.fixture
def synth_data():
    """4 classes x 20 points in 6 dims."""
    return synth_clusters(num_classes=4, per_class=20, dim=6, spread=0.05, seed=3)


@pytest.fixture
def tiny_run_config():
    """A synth run small enough for a handful of steps in a unit test."""
    return build_run_config(
        {
            "data.num_classes": "4",
            "data.per_class": "20",
            "data.dim": "6",
            "data.spread": "0.05",
            "network.encoder.widths": ["6", "8", "4"],
            "network.projector.widths": ["4", "8", "4"],
            "loss.n_negatives": "3",
            "schedule.batch_size": "8",
            "schedule.total_steps": "12",
            "schedule.warmup_steps": "2",
            "checkpoint_every": "5",
        },
        preset="synth",
    )


@pytest.fixture
def schedule():
    return ScheduleConfig(base_lr=1.0, total_steps=100, warmup_steps=10, batch_size=8)


@pytest.fixture
def numeric_grad():
    """Central finite differences of a scalar function of one array."""

    def _numeric_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
        grad = np.zeros_like(x)
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = x[idx]
            x[idx] = orig + eps
            up = fn()
            x[idx] = orig - eps
            down = fn()
            x[idx] = orig
            grad[idx] = (up - down) / (2 * eps)
        return grad

    return _numeric_grad
