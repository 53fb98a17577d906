"""Tests for the linear probe."""

import numpy as np
import pytest

from app.core.exceptions import ConfigurationError, DegenerateError
from app.models.config import ProbeConfig
from app.models.data import Dataset
from app.services.probe_service import _scale, knn_probe, labelled_subset, linear_probe, represent


def _vectors(points, labels, num_classes):
    points = np.asarray(points, dtype=np.float64)
    return Dataset(
        images=points.reshape(len(points), 1, -1, 1), labels=np.asarray(labels), num_classes=num_classes
    )


@pytest.fixture
def probe_cfg():
    return ProbeConfig(epochs=30, batch_size=16, lr=0.1, momentum=0.9)


def test_separable_classes_are_probed_perfectly(probe_cfg):
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1], 40)
    points = rng.normal(scale=0.1, size=(80, 3)) + np.where(labels[:, None] == 1, 1.0, -1.0)
    train = _vectors(points[::2], labels[::2], 2)
    val = _vectors(points[1::2], labels[1::2], 2)
    result = linear_probe(None, train, val, probe_cfg)
    assert result.top1 == 1.0 and result.train_top1 == 1.0
    assert result.top5 is None and result.source == "raw"


def test_shuffled_labels_sit_at_chance(probe_cfg):
    """Labels independent of the features give about 1/K on held-out data."""
    rng = np.random.default_rng(1)
    n, k = 400, 4
    train = _vectors(rng.normal(size=(n, 5)), rng.integers(0, k, n), k)
    val = _vectors(rng.normal(size=(n, 5)), rng.integers(0, k, n), k)
    result = linear_probe(None, train, val, probe_cfg)
    assert abs(result.top1 - 1 / k) <= 3 * np.sqrt((1 / k) * (1 - 1 / k) / n)


def test_top5_needs_five_classes(probe_cfg):
    rng = np.random.default_rng(2)
    labels = np.arange(60) % 6
    points = np.eye(6)[labels] * 3 + rng.normal(scale=0.1, size=(60, 6))
    data = _vectors(points, labels, 6)
    result = linear_probe(None, data, data, probe_cfg)
    assert result.top5 is not None and result.top5 >= result.top1


def test_probe_leaves_the_encoder_frozen(tiny_net, synth_data, probe_cfg):
    before = [p.data.copy() for p in tiny_net.all_parameters()]
    result = linear_probe(tiny_net, synth_data, synth_data, probe_cfg)
    for p, b in zip(tiny_net.all_parameters(), before):
        np.testing.assert_array_equal(p.data, b)
        assert p.grad is None
    assert result.source == "encoder"
    assert represent(tiny_net, synth_data).shape == (80, 4)


def test_single_class_is_degenerate(probe_cfg):
    data = _vectors(np.zeros((4, 2)), [1, 1, 1, 1], 2)
    with pytest.raises(DegenerateError):
        linear_probe(None, data, data, probe_cfg)


def test_unlabelled_split_is_degenerate(probe_cfg):
    data = Dataset(images=np.zeros((4, 1, 2, 1)))
    with pytest.raises(DegenerateError):
        linear_probe(None, data, data, probe_cfg)


def test_label_budget_picks_that_many_per_class():
    """The labelled subset holds exactly labels_per_class images of each class, reproducibly."""
    labels = np.repeat(np.arange(3), 10)
    data = _vectors(np.arange(60, dtype=float).reshape(30, 2), labels, 3)
    cfg = ProbeConfig(labels_per_class=2, seed=4)
    subset = labelled_subset(data, cfg)
    np.testing.assert_array_equal(np.bincount(subset.labels), [2, 2, 2])
    np.testing.assert_array_equal(subset.images, labelled_subset(data, cfg).images)
    assert labelled_subset(data, ProbeConfig()) is data


def test_read_out_trains_on_the_label_budget_only(probe_cfg):
    """With one label per class the probe fits two points, whatever the rest of train says."""
    rng = np.random.default_rng(3)
    labels = np.repeat([0, 1], 30)
    points = rng.normal(scale=0.1, size=(60, 2)) + np.where(labels[:, None] == 1, 1.0, -1.0)
    train = _vectors(points, labels, 2)
    # corrupt every label outside the budget; the probe must not see them
    cfg = probe_cfg.model_copy(update={"labels_per_class": 1})
    keep = labelled_subset(train, cfg)
    flipped = np.array([
        lab if any(np.array_equal(row, k) for k in keep.images) else 1 - lab
        for row, lab in zip(train.images, labels)
    ])
    noisy = _vectors(points, flipped, 2)
    result = linear_probe(None, noisy, _vectors(points, labels, 2), cfg)
    assert result.top1 == 1.0 and result.train_top1 == 1.0


@pytest.mark.parametrize("mode", ["feature", "global", "none"])
def test_scaling_modes_agree_on_separable_data(probe_cfg, mode):
    rng = np.random.default_rng(5)
    labels = np.repeat([0, 1], 40)
    points = rng.normal(scale=0.1, size=(80, 3)) + np.where(labels[:, None] == 1, 1.0, -1.0)
    data = _vectors(points, labels, 2)
    cfg = probe_cfg.model_copy(update={"scaling": mode})
    assert linear_probe(None, data, data, cfg).top1 == 1.0


def test_global_scaling_keeps_the_geometry():
    """One shared divisor: ratios between feature spreads survive, unlike per-feature scaling."""
    rng = np.random.default_rng(6)
    train = rng.normal(size=(500, 2)) * [10.0, 0.1]
    scaled, _ = _scale(train, train, "global")
    ratio = scaled[:, 0].std() / scaled[:, 1].std()
    assert ratio == pytest.approx(train[:, 0].std() / train[:, 1].std(), rel=1e-12)
    np.testing.assert_allclose(np.mean(scaled.var(axis=0)), 1.0, rtol=1e-12)
    feature, _ = _scale(train, train, "feature")
    np.testing.assert_allclose(feature.std(axis=0), 1.0, rtol=1e-12)


def test_knn_vote_uses_the_label_budget():
    """1-NN over one exemplar per class on well separated clusters is exact."""
    rng = np.random.default_rng(7)
    labels = np.repeat(np.arange(3), 20)
    centres = np.eye(3) * 5.0
    points = centres[labels] + rng.normal(scale=0.1, size=(60, 3))
    data = _vectors(points, labels, 3)
    cfg = ProbeConfig(labels_per_class=1, knn_k=1)
    assert knn_probe(None, data, data, cfg) == 1.0
    with pytest.raises(ConfigurationError):
        knn_probe(None, data, data, cfg.model_copy(update={"knn_k": 4}))
