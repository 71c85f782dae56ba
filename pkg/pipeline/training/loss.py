"""Weighted autoregressive negative log-likelihood."""

from typing import Optional, Sequence

import numpy as np

from tools.errors import ShapeError, TrainingError
from tools.tensor import Tensor, log_softmax, mul_constant, pick, scale, slice_rows, tensor_sum


def weighted_nll(logits: Tensor, targets: Sequence[int], weights: Sequence[float],
                 normalizer: Optional[float] = None) -> Tensor:
    """
    -sum_l w_l * log softmax(logits_l)[target_l] / normalizer.

    Args:
        logits: [L x V] scores, row l predicting targets[l]
        targets: L target ids
        weights: L non-negative weights; zero-weight rows contribute nothing
        normalizer: Divisor, defaults to sum(weights); a batch passes its
            total weight so every sample shares one scale

    Raises:
        TrainingError: all weights are zero
    """
    weights = np.asarray(weights, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or weights.shape != (logits.shape[0],) or targets.shape != weights.shape:
        raise ShapeError(
            f"weighted_nll: logits {logits.shape}, targets {targets.shape} and weights {weights.shape} disagree"
        )
    total = float(weights.sum())
    if total <= 0.0:
        raise TrainingError("All loss weights are zero; the sample has nothing to learn")
    picked = pick(log_softmax(logits, axis=-1), targets)
    return scale(tensor_sum(mul_constant(picked, weights)), -1.0 / (normalizer or total))


def sequence_loss(logits: Tensor, ids: Sequence[int], weights: Sequence[float],
                  normalizer: Optional[float] = None) -> Tensor:
    """
    Shifted loss for one sequence: logits at l predict ids[l + 1] with
    weight weights[l + 1].
    """
    ids = np.maximum(np.asarray(ids, dtype=np.int64), 0)
    weights = np.asarray(weights, dtype=np.float64)
    if logits.shape[0] != len(ids):
        raise ShapeError(f"sequence_loss: {logits.shape[0]} logit rows for {len(ids)} positions")
    if len(ids) < 2:
        raise TrainingError("A sequence needs at least two positions to predict anything")
    return weighted_nll(slice_rows(logits, 0, len(ids) - 1), ids[1:], weights[1:], normalizer)
