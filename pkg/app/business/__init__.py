"""Domain logic: networks, objective, augmentation, optimizer and analysis."""

from .networks import NetworkPair, init_network_pair, embed_online, embed_target, encode, ema_update
from .objective import (
    CandidateDistribution,
    LossTerms,
    sample_negatives,
    candidate_distribution,
    invariance_kl,
    pair_loss,
    batch_loss,
    batch_loss_terms,
)
from .optimizer import Lars, cosine_lr, lars_step, sgd_nesterov_step
from .augmentation import build_view_batch, generate_views
from .saliency import heuristic_saliency
from .analysis import discriminant_ratio, knn_accuracy, knn_table, neighbor_purity

__all__ = [
    # Networks
    "NetworkPair",
    "init_network_pair",
    "embed_online",
    "embed_target",
    "encode",
    "ema_update",
    # Objective
    "CandidateDistribution",
    "LossTerms",
    "sample_negatives",
    "candidate_distribution",
    "invariance_kl",
    "pair_loss",
    "batch_loss",
    "batch_loss_terms",
    # Optimizer
    "Lars",
    "cosine_lr",
    "lars_step",
    "sgd_nesterov_step",
    # Augmentation
    "build_view_batch",
    "generate_views",
    "heuristic_saliency",
    # Analysis
    "discriminant_ratio",
    "knn_accuracy",
    "knn_table",
    "neighbor_purity",
]
