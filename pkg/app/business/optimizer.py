"""Learning-rate schedule and the two parameter-update rules.

Updates mutate `Tensor.data` in place. Each step validates every gradient
before touching any parameter, so a rejected step leaves the model unchanged.
"""

import math
from typing import List, Optional, Sequence

import numpy as np
import structlog

from app.core.exceptions import ContractError, NumericError
from app.core.tensor import Tensor
from app.models.config import LarsConfig, ScheduleConfig

logger = structlog.get_logger()

TRUST_EPS = 1e-9


def cosine_lr(step: int, cfg: ScheduleConfig) -> float:
    """Linear warmup to base_lr, then cosine decay to 0; clamps past the end."""
    if step < 0:
        raise ContractError(f"step must be >= 0, got {step}", error_code="step")
    if step >= cfg.total_steps:
        return 0.0 if cfg.total_steps > cfg.warmup_steps else cfg.base_lr
    if step < cfg.warmup_steps:
        return cfg.base_lr * step / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def _check_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], lr: float) -> List[np.ndarray]:
    if lr < 0:
        raise ContractError(f"learning rate must be >= 0, got {lr}", error_code="lr")
    if len(params) != len(grads):
        raise ContractError(
            f"{len(params)} parameters but {len(grads)} gradients", error_code="grad_count"
        )
    checked = []
    for p, g in zip(params, grads):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ContractError(
                f"gradient {g.shape} does not match parameter {p.name} {p.shape}",
                error_code="grad_shape",
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {p.name}", error_code="nan_grad")
        checked.append(g)
    return checked


def _buffers(params: Sequence[Tensor], buffers: Optional[List[np.ndarray]]) -> List[np.ndarray]:
    if buffers is None:
        return [np.zeros_like(p.data) for p in params]
    if len(buffers) != len(params):
        raise ContractError("momentum buffers do not match parameters", error_code="buffers")
    return buffers


def lars_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    lr: float,
    cfg: LarsConfig,
    buffers: Optional[List[np.ndarray]] = None,
) -> List[np.ndarray]:
    """One LARS update; returns the (updated) momentum buffers."""
    grads = _check_step(params, grads, lr)
    buffers = _buffers(params, buffers)
    for i, (p, g) in enumerate(zip(params, grads)):
        excluded = cfg.is_excluded(p.name or "", p.ndim)
        if not excluded:
            g = g + cfg.weight_decay * p.data
        ratio = 1.0
        param_norm = float(np.linalg.norm(p.data))
        grad_norm = float(np.linalg.norm(g))
        if not excluded and param_norm > 0 and grad_norm > 0:
            ratio = cfg.trust_coefficient * param_norm / (grad_norm + TRUST_EPS)
        buffers[i] = cfg.momentum * buffers[i] + ratio * lr * g
        p.data = p.data - buffers[i]
    return buffers


def sgd_nesterov_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    lr: float,
    momentum: float,
    buffers: Optional[List[np.ndarray]] = None,
) -> List[np.ndarray]:
    """m <- mu*m + g; p <- p - lr*(g + mu*m)."""
    if not 0.0 <= momentum < 1.0:
        raise ContractError(f"momentum must lie in [0, 1), got {momentum}", error_code="momentum")
    grads = _check_step(params, grads, lr)
    buffers = _buffers(params, buffers)
    for i, (p, g) in enumerate(zip(params, grads)):
        buffers[i] = momentum * buffers[i] + g
        p.data = p.data - lr * (g + momentum * buffers[i])
    return buffers


class Lars:
    """LARS over a fixed parameter list, owning its momentum buffers."""

    def __init__(self, params: Sequence[Tensor], cfg: LarsConfig):
        self.params = list(params)
        self.cfg = cfg
        self.buffers = [np.zeros_like(p.data) for p in self.params]
        self.logger = logger.bind(service="Lars")

    def step(self, lr: float, grads: Optional[Sequence[np.ndarray]] = None) -> None:
        if grads is None:
            grads = [p.grad for p in self.params]
        self.buffers = lars_step(self.params, grads, lr, self.cfg, self.buffers)

    def load_buffers(self, buffers: Sequence[np.ndarray]) -> None:
        if len(buffers) != len(self.params) or any(
            b.shape != p.shape for b, p in zip(buffers, self.params)
        ):
            raise ContractError("momentum buffers do not match parameters", error_code="buffers")
        self.buffers = [np.array(b, dtype=np.float64) for b in buffers]
