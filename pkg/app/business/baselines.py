"""Comparison objectives sharing the multi-crop pairing of the main loss.

`infonce` reuses the candidate machinery with every other batch image as a
negative and no invariance term; `relic` is the main objective restricted to two
large views. Only `byol` needs its own pair term.
"""

from typing import Tuple

from app.core import tensor as T
from app.core.exceptions import DimensionError
from app.core.tensor import Tensor


def byol_pair_terms(anchors: Tensor, targets: Tensor) -> Tuple[Tensor, Tensor]:
    """(0, sum_b ||a_b - t_b||^2); equals 2 - 2cos per row for unit vectors."""
    if anchors.shape != targets.shape:
        raise DimensionError(
            f"anchors {anchors.shape} and targets {targets.shape} differ", error_code="embedding_width"
        )
    gap = T.sub(anchors, T.stop_gradient(targets))
    return T.as_tensor(0.0), T.sum(T.mul(gap, gap))
