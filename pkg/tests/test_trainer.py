"""Tests for the pretraining loop."""

import shutil

import numpy as np
import pytest
import structlog

from app.core.exceptions import ConfigurationError, NumericError
from app.models.data import Dataset
from app.business.networks import init_network_pair
from app.services import trainer_service
from app.services.storage import CheckpointStore, MetricsLog, load_run_datasets
from app.services.trainer_service import PretrainService


@pytest.fixture
def train_split(tiny_run_config):
    train, _ = load_run_datasets(tiny_run_config.data, tiny_run_config.seed)
    return train


def _run(cfg, data, out, **kwargs):
    return PretrainService(cfg, out, num_workers=1).run(data, **kwargs)


def test_zero_steps_returns_the_initial_pair(tiny_run_config, train_split, tmp_path):
    cfg = tiny_run_config.model_copy(
        update={"schedule": tiny_run_config.schedule.model_copy(update={"total_steps": 0, "warmup_steps": 0})}
    )
    result = _run(cfg, train_split, tmp_path)
    fresh = init_network_pair(cfg.network, cfg.seed)
    assert result.step == 0 and result.metrics == []
    for p, q in zip(result.net.all_parameters(), fresh.all_parameters()):
        np.testing.assert_array_equal(p.data, q.data)


def test_metrics_are_logged_every_step(tiny_run_config, train_split, tmp_path):
    result = _run(tiny_run_config, train_split, tmp_path)
    rows = MetricsLog(tmp_path / "metrics.csv").read()
    assert [r.step for r in rows] == list(range(12))
    assert rows == result.metrics
    assert all(np.isfinite([r.loss, r.contrastive, r.invariance, r.grad_norm]).all() for r in rows)
    assert all(r.invariance >= -1e-12 for r in rows)
    assert rows[0].lr == 0.0 and rows[2].lr == pytest.approx(tiny_run_config.schedule.base_lr)


@pytest.mark.parametrize("beta", [1.0, 0.0])
def test_invariance_is_non_negative_at_every_step(tiny_run_config, train_split, tmp_path, beta):
    """The logged KL term never dips below zero, also when it carries no weight."""
    cfg = tiny_run_config.model_copy(
        update={
            "loss": tiny_run_config.loss.model_copy(update={"beta": beta}),
            "schedule": tiny_run_config.schedule.model_copy(update={"total_steps": 30}),
        }
    )
    result = _run(cfg, train_split, tmp_path)
    assert len(result.metrics) == 30
    for row in result.metrics:
        assert row.invariance >= 0.0, row.step
    assert any(row.invariance > 0.0 for row in result.metrics)


def test_checkpoints_follow_the_cadence(tiny_run_config, train_split, tmp_path):
    result = _run(tiny_run_config, train_split, tmp_path)
    assert (tmp_path / "step-0000005.ckpt").exists() and (tmp_path / "step-0000010.ckpt").exists()
    assert result.checkpoint == tmp_path / "last.ckpt"
    assert CheckpointStore().load(result.checkpoint).step == 12


def test_runs_are_deterministic(tiny_run_config, train_split, tmp_path):
    """Same config and seed write byte-identical metrics logs."""
    _run(tiny_run_config, train_split, tmp_path / "a")
    _run(tiny_run_config, train_split, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_worker_count_does_not_change_the_run(tiny_run_config, train_split, tmp_path):
    PretrainService(tiny_run_config, tmp_path / "a", num_workers=1).run(train_split)
    PretrainService(tiny_run_config, tmp_path / "b", num_workers=3).run(train_split)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_resume_is_bitwise(tiny_run_config, train_split, tmp_path):
    """Stopping at step 5 and resuming gives the uninterrupted run's state and log."""
    full = _run(tiny_run_config, train_split, tmp_path / "full")
    resumed_dir = tmp_path / "resumed"
    resumed_dir.mkdir()
    shutil.copy(tmp_path / "full" / "step-0000005.ckpt", resumed_dir / "start.ckpt")
    resumed = _run(tiny_run_config, train_split, resumed_dir, resume=resumed_dir / "start.ckpt")

    for p, q in zip(full.net.all_parameters(), resumed.net.all_parameters()):
        np.testing.assert_array_equal(p.data, q.data)
    assert resumed.metrics == full.metrics[5:]
    assert (tmp_path / "full" / "last.ckpt").read_bytes() == (resumed_dir / "last.ckpt").read_bytes()


def test_resume_rejects_a_different_config(tiny_run_config, train_split, tmp_path):
    _run(tiny_run_config, train_split, tmp_path / "a")
    other = tiny_run_config.model_copy(update={"seed": tiny_run_config.seed + 1})
    with pytest.raises(ConfigurationError):
        _run(other, train_split, tmp_path / "b", resume=tmp_path / "a" / "step-0000005.ckpt")


def test_training_never_reads_labels(tiny_run_config, train_split, tmp_path):
    """Permuting labels leaves every metric unchanged."""
    shuffled = Dataset(
        images=train_split.images,
        labels=np.random.default_rng(0).permutation(train_split.labels),
        num_classes=train_split.num_classes,
    )
    a = _run(tiny_run_config, train_split, tmp_path / "a")
    b = _run(tiny_run_config, shuffled, tmp_path / "b")
    assert a.metrics == b.metrics


def test_dataset_smaller_than_a_batch(tiny_run_config, train_split, tmp_path):
    with pytest.raises(ConfigurationError):
        _run(tiny_run_config, train_split.subset(np.arange(4)), tmp_path)


def test_numeric_failure_keeps_the_last_good_checkpoint(tiny_run_config, train_split, tmp_path, monkeypatch):
    """A NaN at step 7 aborts the run; last.ckpt still holds step 5."""
    original = trainer_service.batch_loss_terms
    calls = []

    def failing(*args, **kwargs):
        calls.append(1)
        if len(calls) == 8:
            raise NumericError("loss is not finite", error_code="nan_loss")
        return original(*args, **kwargs)

    monkeypatch.setattr(trainer_service, "batch_loss_terms", failing)
    with pytest.raises(NumericError):
        _run(tiny_run_config, train_split, tmp_path)
    assert CheckpointStore().load(tmp_path / "last.ckpt").step == 5
    assert [r.step for r in MetricsLog(tmp_path / "metrics.csv").read()] == list(range(7))


def test_run_context_is_bound_only_during_the_run(tiny_run_config, train_split, tmp_path, monkeypatch):
    """Events inside a run carry preset and seed; the context is cleared afterwards."""
    seen = []
    original = trainer_service.batch_loss_terms

    def spy(*args, **kwargs):
        seen.append(structlog.contextvars.get_contextvars())
        return original(*args, **kwargs)

    monkeypatch.setattr(trainer_service, "batch_loss_terms", spy)
    _run(tiny_run_config, train_split, tmp_path)
    assert seen and all(c == {"preset": tiny_run_config.preset, "seed": tiny_run_config.seed} for c in seen)
    assert structlog.contextvars.get_contextvars() == {}
