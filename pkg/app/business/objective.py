"""The combined contrastive-likelihood plus KL-invariance objective.

A candidate distribution is the softmax of one anchor's temperature-scaled
similarities over {positive, negatives}, positive first. The invariance term is
the KL divergence between the distributions two views of the same image induce
over one shared candidate set, with the weighting side fully detached.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import structlog

from app.core import tensor as T
from app.core.exceptions import ConfigurationError, ContractError, DimensionError
from app.core.tensor import Tensor
from app.models.config import LossConfig
from app.models.data import ViewBatch
from app.business.networks import NetworkPair, embed_online, embed_target

logger = structlog.get_logger()


@dataclass
class CandidateDistribution:
    """log p over candidates; index 0 is the positive."""

    log_probs: Tensor
    candidate_ids: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


@dataclass
class LossTerms:
    """A batch loss with its logged components."""

    total: Tensor
    contrastive: float
    invariance: float
    pair_count: int
    scale: int


def sample_negatives(batch_size: int, anchor: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n distinct batch indices, uniform without replacement, excluding the anchor."""
    if n < 0 or n > batch_size - 1:
        raise ConfigurationError(
            f"cannot draw {n} negatives from a batch of {batch_size}", error_code="n_negatives"
        )
    others = np.delete(np.arange(batch_size), anchor)
    return rng.choice(others, size=n, replace=False)


def distribution_over(
    anchor: Tensor, candidates: Tensor, tau: float, candidate_ids: np.ndarray
) -> CandidateDistribution:
    """Batched kernel: anchor [..., d] against candidates [..., m, d]."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}", error_code="tau")
    if anchor.shape[-1] != candidates.shape[-1] or candidates.shape[:-2] != anchor.shape[:-1]:
        raise DimensionError(
            f"anchor {anchor.shape} does not match candidates {candidates.shape}",
            error_code="embedding_width",
        )
    lifted = T.reshape(anchor, anchor.shape[:-1] + (1, anchor.shape[-1]))
    logits = T.mul(T.sum(T.mul(lifted, candidates), axis=-1), 1.0 / tau)
    return CandidateDistribution(T.log_softmax(logits, axis=-1), np.asarray(candidate_ids))


def candidate_distribution(
    anchor_online: Tensor,
    positive_target: Tensor,
    negative_targets: Union[Tensor, Sequence[Tensor]],
    tau: float,
    candidate_ids: Optional[Sequence[int]] = None,
) -> CandidateDistribution:
    """Softmax of <anchor, candidate>/tau over {positive} + negatives."""
    anchor_online = T.as_tensor(anchor_online)
    positive_target = T.as_tensor(positive_target)
    if isinstance(negative_targets, Tensor):
        negatives = negative_targets
    else:
        negatives = T.concat([T.reshape(T.as_tensor(n), (1, -1)) for n in negative_targets], axis=0)
    width = anchor_online.shape[-1]
    if positive_target.shape != (width,) or negatives.ndim != 2 or negatives.shape[1] != width:
        raise DimensionError(
            f"embedding widths differ: anchor {anchor_online.shape}, positive "
            f"{positive_target.shape}, negatives {negatives.shape}",
            error_code="embedding_width",
        )
    candidates = T.concat([T.reshape(positive_target, (1, width)), negatives], axis=0)
    if candidate_ids is None:
        candidate_ids = np.arange(candidates.shape[0])
    ids = np.asarray(candidate_ids)
    if len(np.unique(ids)) != len(ids):
        raise ContractError("candidate ids must be distinct", error_code="candidate_ids")
    return distribution_over(anchor_online, candidates, tau, ids)


def invariance_kl(dist_a: CandidateDistribution, dist_b: CandidateDistribution) -> Tensor:
    """KL(p_a || p_b) with p_a fully detached; gradient flows through log p_b only."""
    if dist_a.candidate_ids.shape != dist_b.candidate_ids.shape or not np.array_equal(
        dist_a.candidate_ids, dist_b.candidate_ids
    ):
        raise ContractError("KL needs identical candidate sets in the same order", error_code="candidates")
    weights = np.exp(dist_a.log_probs.data)
    gap = T.sub(T.stop_gradient(dist_a.log_probs), dist_b.log_probs)
    return T.sum(T.mul(weights, gap))


def _positive_log_prob(dist: CandidateDistribution) -> Tensor:
    """Sum over rows of log p(positive)."""
    first = np.zeros(dist.log_probs.shape[-1])
    first[0] = 1.0
    return T.sum(T.mul(dist.log_probs, first))


def pair_terms(
    online_a: Tensor,
    online_b: Tensor,
    candidates: Tensor,
    candidate_ids: np.ndarray,
    tau: float,
):
    """(-log p_a(positive), KL(p_b || p_a)) over one shared candidate set."""
    dist_a = distribution_over(online_a, candidates, tau, candidate_ids)
    dist_b = distribution_over(online_b, candidates, tau, candidate_ids)
    return T.mul(_positive_log_prob(dist_a), -1.0), invariance_kl(dist_b, dist_a)


def pair_loss(
    online_a: Tensor,
    online_b: Tensor,
    target_b: Tensor,
    negative_targets: Union[Tensor, Sequence[Tensor]],
    cfg: LossConfig,
) -> Tensor:
    """-alpha * log p_a(positive) + beta * KL(p_b || p_a), both anchored at online views."""
    target_b = T.as_tensor(target_b)
    if isinstance(negative_targets, Tensor):
        negatives = negative_targets
    else:
        negatives = T.concat([T.reshape(T.as_tensor(n), (1, -1)) for n in negative_targets], axis=0)
    width = target_b.shape[-1]
    candidates = T.concat([T.reshape(target_b, (1, width)), negatives], axis=0)
    ids = np.arange(candidates.shape[0])
    contrastive, invariance = pair_terms(
        T.as_tensor(online_a), T.as_tensor(online_b), candidates, ids, cfg.tau
    )
    return T.add(T.mul(contrastive, cfg.alpha), T.mul(invariance, cfg.beta))


def _candidate_ids(batch_size: int, n: int, rng: np.random.Generator, full_batch: bool) -> np.ndarray:
    rows = []
    for b in range(batch_size):
        if full_batch:
            negatives = np.delete(np.arange(batch_size), b)
        else:
            negatives = sample_negatives(batch_size, b, n, rng)
        rows.append(np.concatenate([[b], negatives]))
    return np.asarray(rows, dtype=np.intp)


def batch_loss_terms(
    views: ViewBatch, net: NetworkPair, cfg: LossConfig, rng: np.random.Generator
) -> LossTerms:
    """All-pairs multi-crop loss averaged over the batch.

    Every anchor view (L large, then S small) is paired with every large view j;
    the positive is the target embedding of view j and the negatives are the
    target embeddings of view j of other images. A fresh negative set is drawn
    per (anchor view, j, image) in that loop order.
    """
    from app.business.baselines import byol_pair_terms

    L, S = cfg.num_large_crops, cfg.num_small_crops
    if L < 1:
        raise ConfigurationError("batch_loss needs at least one large crop", error_code="crops")
    if views.num_large != L or views.num_small != S:
        raise ContractError(
            f"views carry {views.num_large}+{views.num_small} crops, config wants {L}+{S}",
            error_code="crop_counts",
        )
    batch = len(views)
    view_shape = views.entries[0].large_views[0].shape

    large = views.large_matrix(view_shape)
    online_large = embed_online(net, large)
    target_large = embed_target(net, large)
    online_small = embed_online(net, views.small_matrix(view_shape)) if S else None

    images = np.arange(batch)
    contrastive = T.as_tensor(0.0)
    invariance = T.as_tensor(0.0)
    pair_count = 0
    for v in range(L + S):
        if v < L:
            anchors = T.gather(online_large, images * L + v)
        else:
            anchors = T.gather(online_small, images * S + (v - L))
        for j in range(L):
            online_j = T.gather(online_large, images * L + j)
            if cfg.objective == "byol":
                c, i = byol_pair_terms(anchors, T.gather(target_large, images * L + j))
            else:
                ids = _candidate_ids(batch, cfg.n_negatives, rng, full_batch=cfg.objective == "infonce")
                candidates = T.gather(target_large, ids * L + j)
                c, i = pair_terms(anchors, online_j, candidates, ids, cfg.tau)
            contrastive = T.add(contrastive, c)
            invariance = T.add(invariance, i)
            pair_count += 1

    alpha, beta = cfg.alpha, cfg.beta
    if cfg.objective == "infonce":
        beta = 0.0
    elif cfg.objective == "byol":
        alpha, beta = 0.0, 1.0
    norm = 1.0 / (cfg.scale * batch)
    total = T.mul(T.add(T.mul(contrastive, alpha), T.mul(invariance, beta)), norm)
    return LossTerms(
        total=total,
        contrastive=contrastive.item() * norm,
        invariance=invariance.item() * norm,
        pair_count=pair_count,
        scale=cfg.scale,
    )


def batch_loss(views: ViewBatch, net: NetworkPair, cfg: LossConfig, rng: np.random.Generator) -> Tensor:
    """Scalar batch objective; see `batch_loss_terms`."""
    return batch_loss_terms(views, net, cfg, rng).total
