"""Latent-space diagnostics: nearest neighbours, class purity and discriminant ratios.

All distances are Euclidean on the vectors as given (raw encoder outputs).
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import structlog
from scipy.spatial.distance import cdist

from app.core.exceptions import ConfigurationError, DegenerateError
from app.models.data import EmbeddingSet

logger = structlog.get_logger()

Neighbors = List[List[Tuple[int, float]]]


def _distances(emb: EmbeddingSet) -> np.ndarray:
    return cdist(emb.vectors, emb.vectors, metric="euclidean")


def _neighbor_indices(dist: np.ndarray, k: int) -> np.ndarray:
    """[N, k] neighbours of each row, self excluded, ties to the lower index."""
    dist = dist.copy()
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _check_k(k: int, n: int) -> None:
    if k < 1 or k >= n:
        raise ConfigurationError(f"k must satisfy 1 <= k < N={n}, got {k}", error_code="knn_k")


def knn_table(emb: EmbeddingSet, k: int) -> Neighbors:
    """For each point, its k nearest other points as (index, distance), ascending."""
    _check_k(k, len(emb))
    dist = _distances(emb)
    idx = _neighbor_indices(dist, k)
    return [[(int(j), float(dist[i, j])) for j in row] for i, row in enumerate(idx)]


def neighbor_purity(emb: EmbeddingSet, k: int) -> float:
    """Fraction of the N*k (point, neighbour) pairs that share a label."""
    _check_k(k, len(emb))
    idx = _neighbor_indices(_distances(emb), k)
    return float(np.mean(emb.labels[idx] == emb.labels[:, None]))


@dataclass
class RatioReport:
    """Per-point discriminant ratios; NaN marks points of singleton classes."""

    ratios: np.ndarray
    median: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    variant: str

    @property
    def defined(self) -> np.ndarray:
        return self.ratios[~np.isnan(self.ratios)]


def _point_ratios(emb: EmbeddingSet) -> np.ndarray:
    dist = _distances(emb)
    same = emb.labels[:, None] == emb.labels[None, :]
    np.fill_diagonal(same, False)
    other = emb.labels[:, None] != emb.labels[None, :]
    within_count = same.sum(axis=1)
    between = (dist * other).sum(axis=1) / other.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        within = (dist * same).sum(axis=1) / within_count
        ratios = between / within
    ratios[within_count == 0] = np.nan
    return ratios


def _centroid_ratios(emb: EmbeddingSet) -> np.ndarray:
    classes, counts = np.unique(emb.labels, return_counts=True)
    centroids = np.stack([emb.vectors[emb.labels == c].mean(axis=0) for c in classes])
    dist = cdist(emb.vectors, centroids, metric="euclidean")
    own = np.searchsorted(classes, emb.labels)
    rows = np.arange(len(emb))
    other = np.ones_like(dist, dtype=bool)
    other[rows, own] = False
    between = (dist * other).sum(axis=1) / other.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = between / dist[rows, own]
    ratios[counts[own] < 2] = np.nan
    return ratios


def discriminant_ratio(emb: EmbeddingSet, variant: str = "point", bins: int = 20) -> RatioReport:
    """Between-class over within-class mean distance, per point.

    `point` averages distances to individual points; `centroid` uses distances
    to class centroids instead.
    """
    if len(np.unique(emb.labels)) < 2:
        raise DegenerateError("discriminant ratios need at least two classes", error_code="classes")
    if variant == "point":
        ratios = _point_ratios(emb)
    elif variant == "centroid":
        ratios = _centroid_ratios(emb)
    else:
        raise ConfigurationError(f"unknown ratio variant {variant!r}", error_code="ratio_variant")

    defined = ratios[~np.isnan(ratios)]
    if defined.size == 0:
        raise DegenerateError("every class is a singleton", error_code="classes")
    finite = defined[np.isfinite(defined)]
    if finite.size:
        histogram, edges = np.histogram(finite, bins=bins)
    else:
        histogram, edges = np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    return RatioReport(
        ratios=ratios,
        median=float(np.median(defined)),
        histogram=histogram,
        bin_edges=edges,
        variant=variant,
    )


def knn_accuracy(train: EmbeddingSet, val: EmbeddingSet, k: int) -> float:
    """Majority vote over the k nearest training points; ties go to the lowest label."""
    _check_k(k, len(train) + 1)
    if train.vectors.shape[1] != val.vectors.shape[1]:
        raise ConfigurationError("train and val embeddings differ in width", error_code="embedding_width")
    dist = cdist(val.vectors, train.vectors, metric="euclidean")
    idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = train.labels[idx]
    num_labels = int(max(train.labels.max(), val.labels.max())) + 1
    counts = np.apply_along_axis(np.bincount, 1, votes, minlength=num_labels)
    predictions = counts.argmax(axis=1)
    return float(np.mean(predictions == val.labels))
