"""Pretraining loop: views, loss, backward, LARS, EMA, metrics and checkpoints."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import structlog

from app.core.config import get_settings
from app.core.exceptions import ConfigurationError, NumericError
from app.core.tensor import backward
from app.models.config import RunConfig
from app.models.data import Dataset, ImageCollection, MetricsRow
from app.business.augmentation import build_view_batch
from app.business.networks import NetworkPair, ema_update, init_network_pair
from app.business.objective import batch_loss_terms
from app.business.optimizer import Lars, cosine_lr
from app.utils.logging import run_context
from app.utils.rng import Stream, stream
from app.services.storage import CheckpointStore, MaskStore, MetricsLog, RunState

logger = structlog.get_logger()

METRICS_FILE = "metrics.csv"
LAST_CHECKPOINT = "last.ckpt"


@dataclass
class PretrainResult:
    """Outcome of a pretraining run."""

    net: NetworkPair
    step: int
    metrics: List[MetricsRow] = field(default_factory=list)
    checkpoint: Optional[Path] = None


class PretrainService:
    """Runs label-blind pretraining for one RunConfig."""

    def __init__(self, cfg: RunConfig, out_dir: Union[str, Path], num_workers: Optional[int] = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.num_workers = num_workers or get_settings().num_workers
        self.checkpoints = CheckpointStore()
        self.metrics_log = MetricsLog(self.out_dir / METRICS_FILE)
        self.logger = logger.bind(service="PretrainService")

    def _collection(self, data: Union[Dataset, ImageCollection]) -> ImageCollection:
        images = data.unlabeled() if isinstance(data, Dataset) else data
        if images.masks is None and self.cfg.data.masks_path:
            masks = MaskStore().read(self.cfg.data.masks_path, expected_count=len(images))
            images = ImageCollection(images=images.images, masks=masks, split=images.split)
        return images

    def _batch_indices(self, step: int, count: int) -> np.ndarray:
        """Epoch-wise permutation from the shuffle stream, partial batches dropped."""
        batch = self.cfg.schedule.batch_size
        per_epoch = count // batch
        epoch, offset = divmod(step, per_epoch)
        order = stream(self.cfg.seed, Stream.SHUFFLE, epoch).permutation(count)
        return order[offset * batch : (offset + 1) * batch]

    def _state(self, net: NetworkPair, optimizer: Lars, step: int) -> RunState:
        return RunState(config=self.cfg, step=step, seed=self.cfg.seed, net=net, buffers=optimizer.buffers)

    def _save(self, net: NetworkPair, optimizer: Lars, step: int) -> Path:
        state = self._state(net, optimizer, step)
        self.checkpoints.save(self.out_dir / f"step-{step:07d}.ckpt", state)
        path = self.out_dir / LAST_CHECKPOINT
        self.checkpoints.save(path, state)
        return path

    def _resume(self, path: Union[str, Path]) -> RunState:
        state = self.checkpoints.load(path)
        if state.config != self.cfg:
            raise ConfigurationError(
                f"{path}: checkpoint was written by a different run config", error_code="resume_config"
            )
        return state

    def run(
        self, data: Union[Dataset, ImageCollection], resume: Optional[Union[str, Path]] = None
    ) -> PretrainResult:
        """Train for schedule.total_steps steps, optionally continuing a checkpoint."""
        with run_context(preset=self.cfg.preset, seed=self.cfg.seed):
            return self._run(data, resume)

    def _run(self, data: Union[Dataset, ImageCollection], resume: Optional[Union[str, Path]]) -> PretrainResult:
        images = self._collection(data)
        batch = self.cfg.schedule.batch_size
        if len(images) < batch:
            raise ConfigurationError(
                f"dataset of {len(images)} images is smaller than one batch of {batch}",
                error_code="batch_size",
            )

        if resume is not None:
            state = self._resume(resume)
            net, start = state.net, state.step
            optimizer = Lars(list(net.online_parameters().values()), self.cfg.lars)
            optimizer.load_buffers(state.buffers)
            self.metrics_log.start(keep_until=start)
        else:
            net, start = init_network_pair(self.cfg.network, self.cfg.seed), 0
            optimizer = Lars(list(net.online_parameters().values()), self.cfg.lars)
            self.metrics_log.start()

        total = self.cfg.schedule.total_steps
        self.logger.info("Pretraining started", start=start, total=total)
        rows: List[MetricsRow] = []
        checkpoint = None
        for step in range(start, total):
            try:
                row = self._train_step(net, optimizer, images, step)
            except NumericError as e:
                self.logger.error("Pretraining aborted on non-finite values", step=step, error=e.message)
                raise
            if step % self.cfg.log_every == 0:
                self.metrics_log.append(row)
                rows.append(row)
            done = step + 1
            if self.cfg.checkpoint_every and done % self.cfg.checkpoint_every == 0:
                checkpoint = self._save(net, optimizer, done)

        if total > start or resume is None:
            checkpoint = self._save(net, optimizer, max(total, start))
        self.logger.info("Pretraining finished", steps=max(total - start, 0), checkpoint=str(checkpoint))
        return PretrainResult(net=net, step=max(total, start), metrics=rows, checkpoint=checkpoint)

    def _train_step(self, net: NetworkPair, optimizer: Lars, images: ImageCollection, step: int) -> MetricsRow:
        indices = self._batch_indices(step, len(images))
        views = build_view_batch(
            images,
            indices,
            self.cfg.augmentation,
            self.cfg.loss,
            seed=self.cfg.seed,
            step=step,
            num_workers=self.num_workers,
        )
        net.zero_grad()
        terms = batch_loss_terms(views, net, self.cfg.loss, stream(self.cfg.seed, Stream.NEGATIVES, step))
        backward(terms.total)

        lr = cosine_lr(step, self.cfg.schedule)
        grads = [p.grad_or_zeros() for p in optimizer.params]
        grad_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        optimizer.step(lr, grads)
        ema_update(net)

        loss = terms.total.item()
        self.logger.debug("Step done", step=step, loss=loss, lr=lr, grad_norm=grad_norm)
        return MetricsRow(
            step=step,
            lr=lr,
            loss=loss,
            contrastive=terms.contrastive,
            invariance=terms.invariance,
            grad_norm=grad_norm,
        )


def pretrain(
    cfg: RunConfig,
    data: Union[Dataset, ImageCollection],
    out_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
) -> PretrainResult:
    return PretrainService(cfg, out_dir).run(data, resume=resume)
