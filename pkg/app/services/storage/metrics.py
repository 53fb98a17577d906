"""Append-only training metrics CSV."""

import csv
from pathlib import Path
from typing import List

from app.core.exceptions import FormatError
from app.models.data import MetricsRow
from .base import BaseStorageService, PathLike

COLUMNS = ("step", "lr", "loss", "contrastive", "invariance", "grad_norm")


def _format(value) -> str:
    return str(value) if isinstance(value, int) else format(value, ".17g")


class MetricsLog(BaseStorageService):
    """One row per logged step; floats written with round-trip precision."""

    def __init__(self, path: PathLike):
        super().__init__()
        self.path = Path(path)

    def start(self, keep_until: int = None) -> None:
        """Create the file with a header, or keep rows with step < keep_until on resume."""
        rows = self.read() if keep_until is not None and self.path.exists() else []
        rows = [r for r in rows if keep_until is not None and r.step < keep_until]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in rows:
                writer.writerow([_format(v) for v in row.as_dict().values()])

    def append(self, row: MetricsRow) -> None:
        with self.path.open("a", newline="") as handle:
            csv.writer(handle, lineterminator="\n").writerow([_format(v) for v in row.as_dict().values()])

    def read(self) -> List[MetricsRow]:
        try:
            with self.path.open(newline="") as handle:
                reader = csv.DictReader(handle)
                if tuple(reader.fieldnames or ()) != COLUMNS:
                    raise FormatError(f"{self.path}: unexpected metrics header", error_code="metrics_header")
                return [
                    MetricsRow(
                        step=int(r["step"]),
                        lr=float(r["lr"]),
                        loss=float(r["loss"]),
                        contrastive=float(r["contrastive"]),
                        invariance=float(r["invariance"]),
                        grad_norm=float(r["grad_norm"]),
                    )
                    for r in reader
                ]
        except (OSError, ValueError, KeyError) as e:
            raise FormatError(f"{self.path}: unreadable metrics log ({e})", error_code="metrics")
