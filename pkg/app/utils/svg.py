"""Deterministic static SVG figures on a 256-step viridis ramp."""

from functools import lru_cache
from typing import List

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import to_hex

CELL = 6
PAD = 10


@lru_cache()
def color_ramp() -> List[str]:
    """256 hex colours, dark to light."""
    cmap = colormaps["viridis"].resampled(256)
    return [to_hex(cmap(i)) for i in range(256)]


def _color(value: float) -> str:
    index = int(np.clip(round(value * 255), 0, 255)) if np.isfinite(value) else 0
    return color_ramp()[index]


def _document(width: int, height: int, body: List[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="#ffffff"/>', *body, "</svg>", ""])


def heatmap_svg(values: np.ndarray, title: str = "") -> str:
    """One cell per entry of an [N, k] matrix, scaled to the ramp by its own min/max."""
    values = np.asarray(values, dtype=np.float64)
    rows, cols = values.shape
    finite = values[np.isfinite(values)]
    low, high = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    span = high - low if high > low else 1.0
    body = [f'<text x="{PAD}" y="{PAD - 2}" font-size="8">{title}</text>'] if title else []
    for i in range(rows):
        for j in range(cols):
            body.append(
                f'<rect class="cell" x="{PAD + j * CELL}" y="{PAD + i * CELL}" width="{CELL}" '
                f'height="{CELL}" fill="{_color((values[i, j] - low) / span)}"/>'
            )
    return _document(2 * PAD + cols * CELL, 2 * PAD + rows * CELL, body)


def histogram_svg(counts: np.ndarray, edges: np.ndarray, title: str = "", height: int = 120) -> str:
    """Bar chart of histogram counts; bars coloured by bin position."""
    counts = np.asarray(counts)
    bar = 12
    peak = counts.max() if counts.size and counts.max() > 0 else 1
    body = [f'<text x="{PAD}" y="{PAD - 2}" font-size="8">{title}</text>'] if title else []
    for i, count in enumerate(counts):
        h = int(round(height * count / peak))
        body.append(
            f'<rect class="bar" x="{PAD + i * bar}" y="{PAD + height - h}" width="{bar - 1}" '
            f'height="{h}" fill="{_color(i / max(len(counts) - 1, 1))}">'
            f"<title>[{edges[i]:.6g}, {edges[i + 1]:.6g}): {int(count)}</title></rect>"
        )
    return _document(2 * PAD + len(counts) * bar, 2 * PAD + height, body)
