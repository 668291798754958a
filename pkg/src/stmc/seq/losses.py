from __future__ import annotations

from typing import Sequence

import numpy as np

from ..tensor import ops
from ..tensor.core import ShapeError, Tensor


def smooth_l1_regression(pred: Tensor, truth, beta: float = 30.0, beta_mode: str = "inside") -> Tensor:
    """Keypoint regression loss over ``[T, K, 2]`` coordinates, normalized by ``2TK``.

    ``beta_mode="inside"`` applies smooth-L1 to ``beta * error``;
    ``"outside"`` scales ``smooth-L1(error)`` by ``beta``.
    """
    truth = np.asarray(getattr(truth, "data", truth), dtype=pred.dtype)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[-1] != 2:
        raise ShapeError(f"regression: prediction {pred.shape} vs truth {truth.shape}, expected matching [T, K, 2]")
    t_len, k = pred.shape[:2]
    diff = ops.sub(pred, Tensor(truth))
    if beta_mode == "inside":
        total = ops.sum(ops.smooth_l1(ops.mul(diff, beta)))
    elif beta_mode == "outside":
        total = ops.mul(ops.sum(ops.smooth_l1(diff)), beta)
    else:
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    return ops.mul(total, 1.0 / (2 * t_len * k))


def joint_loss(ctc_inter: Tensor, ctc_intra: Sequence[Tensor], regression: Tensor, alpha: float = 0.6) -> Tensor:
    """Inter-cue CTC + alpha * sum of intra-cue CTCs + keypoint regression."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    total = ctc_inter
    if alpha and ctc_intra:
        total = ops.add(total, ops.mul(ops.sum(ops.stack(list(ctc_intra))), alpha))
    return ops.add(total, regression)
