"""End-to-end synth runs: what pretraining buys over raw inputs, and the two ablations.

These pretrain the full synth preset three times and take minutes; run them with
`pytest -m slow`.
"""

from dataclasses import dataclass

import pytest

from app.business.analysis import discriminant_ratio, neighbor_purity
from app.models.presets import get_preset
from app.services.analysis_service import embedding_set
from app.services.calibration_service import resolve_run_config
from app.services.probe_service import linear_probe
from app.services.storage import load_run_datasets
from app.services.trainer_service import PretrainService

pytestmark = pytest.mark.slow

WORKERS = 8


@dataclass
class Outcome:
    top1: float
    purity: float
    median_ratio: float


def _outcome(net, train, val, cfg) -> Outcome:
    emb = embedding_set(net, val)
    return Outcome(
        top1=linear_probe(net, train, val, cfg.probe).top1,
        purity=neighbor_purity(emb, 5),
        median_ratio=discriminant_ratio(emb).median,
    )


@pytest.fixture(scope="module")
def outcomes(tmp_path_factory):
    """Raw-input scores plus one trained outcome per preset, all on the same calibrated data."""
    base = resolve_run_config(get_preset("synth"))
    train, val = load_run_datasets(base.data, base.seed)
    results = {"raw": _outcome(None, train, val, base)}
    for name in ("synth", "synth-no-invariance", "synth-frozen-target"):
        cfg = get_preset(name)
        cfg = cfg.model_copy(update={"data": base.data})
        out = tmp_path_factory.mktemp(name)
        net = PretrainService(cfg, out, num_workers=WORKERS).run(train).net
        results[name] = _outcome(net, train, val, cfg)
    return results


def test_raw_inputs_sit_in_the_calibrated_band(outcomes):
    assert 0.70 <= outcomes["raw"].top1 <= 0.85


def test_pretraining_beats_raw_inputs(outcomes):
    raw, learned = outcomes["raw"], outcomes["synth"]
    assert learned.top1 >= raw.top1 + 0.05
    assert learned.median_ratio > raw.median_ratio
    assert learned.purity >= 0.9


def test_dropping_invariance_lowers_purity(outcomes):
    with_kl, without_kl = outcomes["synth"].purity, outcomes["synth-no-invariance"].purity
    assert without_kl < with_kl, f"beta=0 purity {without_kl:.4f} vs default {with_kl:.4f}"


def test_frozen_target_costs_ten_points(outcomes):
    frozen, moving = outcomes["synth-frozen-target"].top1, outcomes["synth"].top1
    assert frozen <= moving - 0.10, f"gamma=1 top1 {frozen:.4f} vs gamma=0.99 {moving:.4f}"
