"""Tests for run configs, presets, overrides and process settings."""

import pytest

from app.core.config import get_settings
from app.core.exceptions import ConfigurationError
from app.models.config import AugmentationConfig, LossConfig, NetworkSpec, MlpSpec
from app.models.presets import PRESETS, build_run_config, get_preset, load_run_config


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_validates(name):
    cfg = get_preset(name)
    assert cfg.preset == name


def test_synth_preset_shape():
    cfg = get_preset("synth")
    assert cfg.view_shape == (1, 32, 1)
    assert not cfg.augmentation.crops_enabled and cfg.augmentation.mask_prob == 0.0
    assert cfg.loss.scale == (2 + 1) * 2


def test_ablation_presets_differ_from_synth():
    assert get_preset("synth-no-invariance").loss.beta == 0.0
    assert get_preset("synth-frozen-target").network.gamma == 1.0


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        get_preset("mnist")


def test_overrides_are_coerced():
    overrides = {"loss.beta": "0.5", "schedule.total_steps": "7", "schedule.warmup_steps": "3"}
    cfg = build_run_config(overrides, preset="synth")
    assert cfg.loss.beta == 0.5 and cfg.schedule.total_steps == 7 and cfg.schedule.warmup_steps == 3


def test_single_item_list_override_becomes_a_list():
    cfg = build_run_config({"lars.exclude": "bias"}, preset="synth")
    assert cfg.lars.exclude == ["bias"]
    assert build_run_config({"lars.exclude": " norm "}, preset="synth").lars.exclude == ["norm"]
    assert build_run_config({"lars.exclude": ["bias", "norm"]}, preset="synth").lars.exclude == ["bias", "norm"]


def test_single_item_list_in_a_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("preset=synth\nlars.exclude=bias\n")
    assert load_run_config(path).lars.exclude == ["bias"]


def test_synth_preset_calibrates_its_spread():
    cfg = get_preset("synth")
    assert cfg.data.spread is None and cfg.data.geometry == "circle"
    assert 0.70 <= cfg.data.raw_probe_target <= 0.85
    assert cfg.probe.labels_per_class == 2 and cfg.probe.scaling == "global"


def test_unknown_override_key():
    with pytest.raises(ConfigurationError) as exc:
        build_run_config({"loss.gamma": "1"}, preset="synth")
    assert exc.value.error_code == "unknown_key"


@pytest.mark.parametrize(
    "key, value",
    [
        ("loss.tau", "-1"),
        ("loss.tau", "warm"),
        ("network.gamma", "1.5"),
        ("schedule.warmup_steps", "5000"),
        ("augmentation.crops_enabled", "true"),
        ("loss.n_negatives", "500"),
        ("data.dim", "16"),
    ],
)
def test_invalid_values_are_configuration_errors(key, value):
    with pytest.raises(ConfigurationError):
        build_run_config({key: value}, preset="synth")


def test_loss_weights_cannot_both_vanish():
    with pytest.raises(ConfigurationError):
        LossConfig(alpha=0.0, beta=0.0)


def test_relic_objective_uses_two_large_crops():
    with pytest.raises(ConfigurationError):
        LossConfig(objective="relic")
    assert LossConfig(objective="relic", num_large_crops=2, num_small_crops=0).scale == 4


def test_projector_must_follow_encoder():
    with pytest.raises(ConfigurationError):
        NetworkSpec(encoder=MlpSpec(widths=[4, 3]), projector=MlpSpec(widths=[5, 2]))


def test_zero_width_layer():
    with pytest.raises(ConfigurationError):
        MlpSpec(widths=[4, 0, 2])


def test_parity_defaults():
    cfg = AugmentationConfig()
    assert cfg.parity_params("odd").solarize_prob == 0.2 and cfg.parity_params("odd").blur_prob == 0.1
    assert cfg.parity_params("even").blur_prob == 1.0 and cfg.parity_params("even").solarize_prob == 0.0


def test_load_run_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# quick synth run\n"
        "preset=synth\n"
        "loss.beta=0.0\n"
        "data.dim=8\n"
        "network.encoder.widths=8,16,4\n"
        "network.projector.widths=4,8,4\n"
    )
    cfg = load_run_config(path)
    assert cfg.preset == "synth" and cfg.loss.beta == 0.0
    assert cfg.network.encoder.widths == [8, 16, 4]
    assert load_run_config(path, {"loss.beta": "2.0"}).loss.beta == 2.0


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "absent.cfg")


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("RELIC_NUM_WORKERS", "2")
    get_settings.cache_clear()
    try:
        assert get_settings().num_workers == 2
    finally:
        get_settings.cache_clear()


def test_relic_objective_runs_without_masks():
    overrides = {"loss.objective": "relic", "loss.num_large_crops": "2", "loss.num_small_crops": "0"}
    assert build_run_config(overrides, preset="synth").loss.objective == "relic"
    with pytest.raises(ConfigurationError):
        build_run_config(dict(overrides, **{"augmentation.mask_prob": "0.1"}), preset="synth")
