"""Spread calibration for the synthetic cluster source.

A synth run may leave `data.spread` unset; it is then chosen so that the linear
probe on raw inputs lands at `data.raw_probe_target`. The search is a bisection
in log-spread over one seeded noise draw, so the result is a pure function of
the run config.
"""

import math

import structlog

from app.core.exceptions import ConfigurationError
from app.models.config import RunConfig
from app.services.probe_service import linear_probe
from app.services.storage.datasets import load_run_datasets

logger = structlog.get_logger()

SPREAD_BOUNDS = (1e-3, 1.0)
TOLERANCE = 0.02
MAX_ITERATIONS = 40


def raw_probe_accuracy(cfg: RunConfig, spread: float) -> float:
    """Raw-input probe top-1 on the run's data generated at `spread`."""
    data = cfg.data.model_copy(update={"spread": spread})
    train, val = load_run_datasets(data, cfg.seed)
    return linear_probe(None, train, val, cfg.probe).top1


def calibrate_spread(cfg: RunConfig) -> float:
    """Spread whose raw probe score is within TOLERANCE of the target, else the closest one tried."""
    if cfg.data.source != "synth":
        raise ConfigurationError("only the synth source has a spread", error_code="spread")
    target = cfg.data.raw_probe_target
    low, high = (math.log(b) for b in SPREAD_BOUNDS)
    best_spread, best_gap = None, math.inf
    for iteration in range(MAX_ITERATIONS):
        spread = math.exp(0.5 * (low + high))
        accuracy = raw_probe_accuracy(cfg, spread)
        gap = abs(accuracy - target)
        logger.debug("Calibration step", iteration=iteration, spread=spread, accuracy=accuracy)
        if gap < best_gap:
            best_spread, best_gap = spread, gap
        if gap <= TOLERANCE:
            break
        # wider clusters are harder to separate
        if accuracy > target:
            low = math.log(spread)
        else:
            high = math.log(spread)

    if best_gap > TOLERANCE:
        logger.warning("Spread calibration missed its target", target=target, spread=best_spread, gap=best_gap)
    logger.info("Spread calibrated", target=target, spread=best_spread, gap=best_gap)
    return best_spread


def resolve_run_config(cfg: RunConfig) -> RunConfig:
    """The config with a concrete synth spread; configs that already have one pass through."""
    if cfg.data.source != "synth" or cfg.data.spread is not None:
        return cfg
    data = cfg.data.model_copy(update={"spread": calibrate_spread(cfg)})
    return cfg.model_copy(update={"data": data})
