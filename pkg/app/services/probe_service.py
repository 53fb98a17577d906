"""Linear evaluation of frozen representations."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import structlog

from app.core import tensor as T
from app.core.exceptions import DegenerateError
from app.core.tensor import Tensor, backward
from app.models.config import ProbeConfig
from app.models.data import Dataset, EmbeddingSet
from app.business.analysis import knn_accuracy
from app.business.networks import NetworkPair, encode
from app.business.optimizer import sgd_nesterov_step
from app.utils.rng import Stream, stream

logger = structlog.get_logger()


@dataclass
class ProbeResult:
    top1: float
    top5: Optional[float]
    train_top1: float
    source: str


def represent(net: Optional[NetworkPair], dataset: Dataset) -> np.ndarray:
    """Frozen encoder outputs, or flattened pixels when `net` is None."""
    flat = dataset.images.reshape(len(dataset), -1)
    return flat.copy() if net is None else encode(net, flat)


def _scale(train: np.ndarray, val: np.ndarray, mode: str) -> Tuple[np.ndarray, np.ndarray]:
    """Centre on the train mean, then divide per feature (`feature`) or by one shared RMS spread (`global`)."""
    if mode == "none":
        return train, val
    mean = train.mean(axis=0)
    if mode == "feature":
        std = train.std(axis=0)
        std[std == 0] = 1.0
    else:
        std = float(np.sqrt(np.mean(train.var(axis=0)))) or 1.0
    return (train - mean) / std, (val - mean) / std


def labelled_subset(train: Dataset, cfg: ProbeConfig) -> Dataset:
    """The first `labels_per_class` images of every class in a seeded order."""
    if cfg.labels_per_class is None:
        return train
    order = stream(cfg.seed, Stream.PROBE, 0).permutation(len(train))
    ranked = train.labels[order]
    picked = np.concatenate([order[ranked == c][: cfg.labels_per_class] for c in np.unique(train.labels)])
    return train.subset(np.sort(picked))


def _topk(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean((ranked == labels[:, None]).any(axis=1)))


class LinearProbe:
    """Softmax classifier trained with SGD + Nesterov momentum, no weight decay."""

    def __init__(self, cfg: ProbeConfig):
        self.cfg = cfg
        self.logger = logger.bind(service="LinearProbe")

    def fit(self, features: np.ndarray, labels: np.ndarray, num_classes: int) -> Tuple[Tensor, Tensor]:
        weight = Tensor(np.zeros((features.shape[1], num_classes)), requires_grad=True, name="probe.weight")
        bias = Tensor(np.zeros(num_classes), requires_grad=True, name="probe.bias")
        onehot = np.eye(num_classes)[labels]
        buffers = None
        for epoch in range(self.cfg.epochs):
            order = stream(self.cfg.seed, Stream.PROBE, epoch + 1).permutation(len(features))
            for start in range(0, len(order), self.cfg.batch_size):
                rows = order[start : start + self.cfg.batch_size]
                logits = T.add(T.matmul(T.as_tensor(features[rows]), weight), bias)
                picked = T.mul(T.log_softmax(logits, axis=-1), onehot[rows])
                loss = T.mul(T.sum(picked), -1.0 / len(rows))
                weight.zero_grad()
                bias.zero_grad()
                backward(loss)
                buffers = sgd_nesterov_step(
                    [weight, bias], [weight.grad, bias.grad], self.cfg.lr, self.cfg.momentum, buffers
                )
        return weight, bias

    @staticmethod
    def scores(features: np.ndarray, weight: Tensor, bias: Tensor) -> np.ndarray:
        return features @ weight.data + bias.data


def linear_probe(
    net: Optional[NetworkPair], train: Dataset, val: Dataset, cfg: ProbeConfig
) -> ProbeResult:
    """Top-1 (and top-5 when there are >= 5 classes) accuracy of a linear read-out.

    The encoder is only read: features are computed once, up front.
    """
    if train.labels is None or val.labels is None:
        raise DegenerateError("probing needs labelled train and val splits", error_code="labels")
    train = labelled_subset(train, cfg)
    if len(np.unique(train.labels)) < 2:
        raise DegenerateError("probing needs at least two classes", error_code="classes")
    num_classes = int(max(train.num_classes, train.labels.max() + 1, val.labels.max() + 1))

    train_x, val_x = represent(net, train), represent(net, val)
    train_x, val_x = _scale(train_x, val_x, cfg.scaling)

    probe = LinearProbe(cfg)
    weight, bias = probe.fit(train_x, train.labels, num_classes)
    val_scores = probe.scores(val_x, weight, bias)
    result = ProbeResult(
        top1=_topk(val_scores, val.labels, 1),
        top5=_topk(val_scores, val.labels, 5) if num_classes >= 5 else None,
        train_top1=_topk(probe.scores(train_x, weight, bias), train.labels, 1),
        source="raw" if net is None else "encoder",
    )
    probe.logger.info("Probe finished", source=result.source, top1=result.top1, top5=result.top5)
    return result


def knn_probe(net: Optional[NetworkPair], train: Dataset, val: Dataset, cfg: ProbeConfig) -> float:
    """k-NN vote accuracy on val over the same labelled train images the linear probe sees."""
    if train.labels is None or val.labels is None:
        raise DegenerateError("k-NN evaluation needs labelled train and val splits", error_code="labels")
    train = labelled_subset(train, cfg)
    accuracy = knn_accuracy(
        EmbeddingSet(vectors=represent(net, train), labels=train.labels),
        EmbeddingSet(vectors=represent(net, val), labels=val.labels),
        cfg.knn_k,
    )
    logger.info("k-NN evaluation finished", source="raw" if net is None else "encoder", k=cfg.knn_k, top1=accuracy)
    return accuracy
