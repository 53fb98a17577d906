"""Latent-space report: CSV tables plus static SVG figures."""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import structlog

from app.core.exceptions import FormatError
from app.models.data import Dataset, EmbeddingSet
from app.business.analysis import discriminant_ratio, knn_table, neighbor_purity
from app.business.networks import NetworkPair
from app.services.probe_service import represent
from app.services.storage.base import BaseStorageService
from app.utils.svg import heatmap_svg, histogram_svg

logger = structlog.get_logger()


def embedding_set(net: Optional[NetworkPair], dataset: Dataset, source: str = "") -> EmbeddingSet:
    """Encoder outputs (or raw pixels when `net` is None) with their labels."""
    return EmbeddingSet(
        vectors=represent(net, dataset),
        labels=dataset.labels,
        source=source or ("raw" if net is None else "encoder"),
    )


@dataclass
class AnalysisSummary:
    source: str
    purity: float
    median_ratio: float
    median_centroid_ratio: float
    files: Dict[str, Path] = field(default_factory=dict)


def _csv(header, rows) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def _num(value: float) -> str:
    return "nan" if np.isnan(value) else format(float(value), ".17g")


class AnalysisService(BaseStorageService):
    """Computes the neighbour and ratio diagnostics and writes them out."""

    def __init__(self, k: int = 5):
        super().__init__()
        self.k = k

    def emit_report(self, emb: EmbeddingSet, out_dir: Union[str, Path], prefix: str = "") -> AnalysisSummary:
        """knn.csv, ratios.csv, summary.csv, heatmap.svg and histogram.svg under out_dir."""
        out_dir = Path(out_dir)
        if out_dir.exists() and not out_dir.is_dir():
            raise FormatError(f"{out_dir}: not a directory", error_code="io")
        name = (prefix + "-") if prefix else ""

        table = knn_table(emb, self.k)
        purity = neighbor_purity(emb, self.k)
        point = discriminant_ratio(emb, variant="point")
        centroid = discriminant_ratio(emb, variant="centroid")

        knn_rows = [
            (i, rank, j, _num(d), int(emb.labels[i] == emb.labels[j]))
            for i, neighbors in enumerate(table)
            for rank, (j, d) in enumerate(neighbors, start=1)
        ]
        ratio_rows = [
            (i, int(emb.labels[i]), _num(point.ratios[i]), _num(centroid.ratios[i])) for i in range(len(emb))
        ]
        summary_rows = [
            ("source", emb.source),
            ("n", len(emb)),
            ("k", self.k),
            ("neighbor_purity", _num(purity)),
            ("median_ratio_point", _num(point.median)),
            ("median_ratio_centroid", _num(centroid.median)),
        ]

        # Rows grouped by class so a clean embedding shows as diagonal blocks
        order = np.argsort(emb.labels, kind="stable")
        neighbor_labels = np.array([[emb.labels[j] for j, _ in table[i]] for i in order], dtype=np.float64)

        files = {
            "knn": self._write_atomic(
                out_dir / f"{name}knn.csv",
                _csv(("point", "rank", "neighbor", "distance", "same_label"), knn_rows),
            ),
            "ratios": self._write_atomic(
                out_dir / f"{name}ratios.csv", _csv(("point", "label", "ratio_point", "ratio_centroid"), ratio_rows)
            ),
            "summary": self._write_atomic(out_dir / f"{name}summary.csv", _csv(("metric", "value"), summary_rows)),
            "heatmap": self._write_atomic(
                out_dir / f"{name}heatmap.svg",
                heatmap_svg(neighbor_labels, title=f"{emb.source}: labels of {self.k} nearest neighbours").encode(),
            ),
            "histogram": self._write_atomic(
                out_dir / f"{name}histogram.svg",
                histogram_svg(point.histogram, point.bin_edges, title=f"{emb.source}: discriminant ratio").encode(),
            ),
        }
        self.logger.info(
            "Analysis report written", source=emb.source, purity=purity, median_ratio=point.median, out=str(out_dir)
        )
        return AnalysisSummary(
            source=emb.source,
            purity=purity,
            median_ratio=point.median,
            median_centroid_ratio=centroid.median,
            files=files,
        )


def emit_report(emb: EmbeddingSet, out_dir: Union[str, Path], k: int = 5) -> AnalysisSummary:
    return AnalysisService(k=k).emit_report(emb, out_dir)
