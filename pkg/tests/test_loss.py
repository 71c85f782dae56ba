"""Weighted negative log-likelihood."""

import numpy as np
import pytest

from tools.errors import ShapeError, TrainingError
from tools.gradcheck import check_gradients
from tools.tensor import ComputationTape, backward, parameter

from pipeline.training.loss import sequence_loss, weighted_nll


def _logits(rows=5, vocab=7, seed=0):
    return parameter(np.random.default_rng(seed).normal(size=(rows, vocab)), name="logits")


def _reference(logits, targets, weights, normalizer=None):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(len(targets)), targets]
    return -(weights * picked).sum() / (normalizer or weights.sum())


def test_value_matches_reference():
    logits = _logits()
    targets = np.array([1, 0, 6, 3, 3])
    weights = np.array([0.0, 1.0, 3.0, 3.0, 1.0])
    assert weighted_nll(logits, targets, weights).item() == pytest.approx(
        _reference(logits.data, targets, weights), rel=1e-12)
    assert weighted_nll(logits, targets, weights, normalizer=20.0).item() == pytest.approx(
        _reference(logits.data, targets, weights, 20.0), rel=1e-12)


def test_uniform_logits_give_log_vocab():
    logits = parameter(np.zeros((3, 8)))
    assert weighted_nll(logits, [0, 1, 2], [1.0, 1.0, 1.0]).item() == pytest.approx(np.log(8))


def test_zero_weight_rows_get_zero_gradient():
    logits = _logits()
    with ComputationTape() as tape:
        loss = weighted_nll(logits, [1, 0, 6, 3, 3], [0.0, 1.0, 0.0, 3.0, 0.0])
    backward(tape, loss)
    np.testing.assert_array_equal(logits.grad[[0, 2, 4]], 0.0)
    assert np.abs(logits.grad[[1, 3]]).min() > 0.0


def test_gradients():
    logits = _logits(seed=1)
    result = check_gradients(lambda: weighted_nll(logits, [2, 2, 0, 5, 1], [1.0, 3.0, 0.5, 0.0, 2.0]),
                             [logits])
    assert result.passed(1e-4), result


def test_sequence_loss_predicts_the_next_position():
    logits = _logits(rows=4)
    ids = [1, -1, 4, 2]
    weights = [0.0, 0.0, 3.0, 1.0]
    expected = weighted_nll(parameter(logits.data[:3]), [0, 4, 2], [0.0, 3.0, 1.0]).item()
    assert sequence_loss(logits, ids, weights).item() == pytest.approx(expected, rel=1e-12)


def test_errors():
    logits = _logits()
    with pytest.raises(TrainingError):
        weighted_nll(logits, [0] * 5, [0.0] * 5)
    with pytest.raises(ShapeError):
        weighted_nll(logits, [0] * 4, [1.0] * 4)
    with pytest.raises(ShapeError):
        sequence_loss(logits, [1, 2, 3], [1.0, 1.0, 1.0])
    with pytest.raises(TrainingError):
        sequence_loss(_logits(rows=1), [1], [1.0])
