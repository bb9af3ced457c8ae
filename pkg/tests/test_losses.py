"""Loss oracles: hand-computed values and gradient structure."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fedqsim.nn.losses import (
    LossKind,
    class_to_rating,
    loss_and_grad,
    rating_to_class,
    softmax,
)


def test_softmax_rows_sum_to_one():
    logits = np.random.default_rng(1).normal(size=(6, 9)) * 30
    p = softmax(logits)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert p.min() >= 0.0


def test_softmax_shift_invariance():
    logits = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(softmax(logits), softmax(logits + 1000.0), atol=1e-12)


def test_rating_class_grid():
    classes = np.arange(10)
    ratings = class_to_rating(classes)
    assert np.array_equal(ratings, 0.5 + 0.5 * classes)
    assert np.array_equal(rating_to_class(ratings), classes)


def test_cross_entropy_uniform_oracle():
    # All-zero logits over k classes: loss = ln k regardless of the target.
    k = 7
    logits = np.zeros((3, k))
    targets = np.array([0, 3, 6])
    loss, grad = loss_and_grad(LossKind.SOFTMAX_CROSS_ENTROPY, logits, targets)
    assert loss == pytest.approx(math.log(k), abs=1e-12)
    # Gradient: (p - onehot)/batch with p = 1/k.
    expected = np.full((3, k), 1.0 / k)
    expected[np.arange(3), targets] -= 1.0
    assert np.allclose(grad, expected / 3, atol=1e-12)


def test_cross_entropy_confident_correct():
    logits = np.array([[50.0, 0.0, 0.0]])
    loss, grad = loss_and_grad(LossKind.SOFTMAX_CROSS_ENTROPY, logits, np.array([0]))
    assert loss < 1e-15
    assert np.allclose(grad, 0.0, atol=1e-12)


def test_expected_rating_mse_oracle():
    # Point mass on class 4 (rating 2.5) against target rating 3.0:
    # squared error 0.25 exactly.
    logits = np.zeros((1, 10))
    logits[0, 4] = 1e4
    loss, _ = loss_and_grad(LossKind.MEAN_SQUARED_ERROR, logits, np.array([3.0]))
    assert loss == pytest.approx(0.25, abs=1e-9)
    # Integer class targets go through the rating grid: class 5 -> 3.0.
    loss2, _ = loss_and_grad(LossKind.MEAN_SQUARED_ERROR, logits, np.array([5]))
    assert loss2 == pytest.approx(0.25, abs=1e-9)


def test_mse_gradient_rows_sum_to_zero():
    # d expected / d logits is p * (grid - expected): each row sums to 0.
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(4, 10))
    _, grad = loss_and_grad(LossKind.MEAN_SQUARED_ERROR, logits, np.array([1.0, 2.0, 3.0, 4.5]))
    assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_sum_of_both_adds_components():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(5, 10))
    classes = np.array([0, 2, 4, 6, 9])
    ce_loss, ce_grad = loss_and_grad(LossKind.SOFTMAX_CROSS_ENTROPY, logits, classes)
    mse_loss, mse_grad = loss_and_grad(LossKind.MEAN_SQUARED_ERROR, logits, classes)
    both_loss, both_grad = loss_and_grad(LossKind.SUM_OF_BOTH, logits, classes)
    assert both_loss == pytest.approx(ce_loss + mse_loss, rel=1e-12)
    assert np.allclose(both_grad, ce_grad + mse_grad, atol=1e-12)


def test_sum_of_both_accepts_float_ratings():
    logits = np.random.default_rng(7).normal(size=(3, 10))
    ratings = np.array([0.5, 2.5, 5.0])
    from_floats, _ = loss_and_grad(LossKind.SUM_OF_BOTH, logits, ratings)
    from_classes, _ = loss_and_grad(LossKind.SUM_OF_BOTH, logits, rating_to_class(ratings))
    assert from_floats == pytest.approx(from_classes, rel=1e-12)
