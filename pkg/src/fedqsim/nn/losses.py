"""Losses over final-layer logits.

Models end in a linear layer; the softmax lives here (and in prediction
helpers) rather than as a network layer, which keeps cross-entropy numerically
stable.  Three kinds are supported:

* ``SOFTMAX_CROSS_ENTROPY`` on class targets.
* ``MEAN_SQUARED_ERROR`` on the probability-weighted expected rating implied
  by the logits, against target ratings on the half-star grid.
* ``SUM_OF_BOTH`` adds the two.

Exactly one kind is selected per training run.  Losses are means over the
batch; gradients returned are with respect to the logits and already include
the 1/batch factor.
"""

from __future__ import annotations

import enum

import numpy as np


class LossKind(enum.Enum):
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    MEAN_SQUARED_ERROR = "mean_squared_error"
    SUM_OF_BOTH = "sum_of_both"


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; rows sum to 1 within 1e-12."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def class_to_rating(rating_class: np.ndarray) -> np.ndarray:
    """Class index 0..9 to rating 0.5..5.0 (rating = 0.5 + 0.5 * class)."""
    return 0.5 + 0.5 * np.asarray(rating_class, dtype=np.float64)


def rating_to_class(rating: np.ndarray) -> np.ndarray:
    """Rating 0.5..5.0 on the half-star grid to class index 0..9."""
    return np.round(2.0 * np.asarray(rating, dtype=np.float64) - 1.0).astype(np.int64)


def _cross_entropy(logits: np.ndarray, classes: np.ndarray):
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(b), classes] - log_z
    loss = -log_p.mean()
    probs = softmax(logits)
    grad = probs.copy()
    grad[np.arange(b), classes] -= 1.0
    grad /= b
    return loss, grad


def _expected_rating_mse(logits: np.ndarray, ratings: np.ndarray):
    b, k = logits.shape
    grid = class_to_rating(np.arange(k))
    probs = softmax(logits)
    expected = probs @ grid
    diff = expected - ratings
    loss = np.mean(diff**2)
    # d expected / d logit_j = p_j * (grid_j - expected)
    grad = (2.0 / b) * diff[:, None] * probs * (grid[None, :] - expected[:, None])
    return loss, grad


def loss_and_grad(kind: LossKind, logits: np.ndarray, targets: np.ndarray):
    """Mean loss and its gradient with respect to ``logits``.

    ``targets`` holds class indices.  For the MSE kinds a float array of
    ratings on the half-star grid is also accepted; integer targets are mapped
    through ``class_to_rating`` first.
    """
    targets = np.asarray(targets)
    if kind is LossKind.SOFTMAX_CROSS_ENTROPY:
        return _cross_entropy(logits, targets.astype(np.int64))
    if kind is LossKind.MEAN_SQUARED_ERROR:
        ratings = targets if np.issubdtype(targets.dtype, np.floating) else class_to_rating(targets)
        return _expected_rating_mse(logits, ratings)
    if kind is LossKind.SUM_OF_BOTH:
        if np.issubdtype(targets.dtype, np.floating):
            classes = rating_to_class(targets)
            ratings = targets
        else:
            classes = targets.astype(np.int64)
            ratings = class_to_rating(targets)
        ce_loss, ce_grad = _cross_entropy(logits, classes)
        mse_loss, mse_grad = _expected_rating_mse(logits, ratings)
        return ce_loss + mse_loss, ce_grad + mse_grad
    raise ValueError(f"unknown loss kind: {kind!r}")
