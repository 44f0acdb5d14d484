import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from caveline.errors import InvalidConfig, ShapeMismatch
from caveline.losses import BCE_EPS, LossWeights, bce_loss, combined_loss, dice_loss


def bce_oracle(pred, target, eps=BCE_EPS):
    p = np.clip(np.asarray(pred, float), eps, 1 - eps)
    t = np.asarray(target, float)
    return float(np.mean(-t * np.log(p) - (1 - t) * np.log(1 - p)))


def dice_oracle(pred, target):
    p = np.asarray(pred, float)
    t = np.asarray(target, float)
    return 1.0 - 2.0 * (p * t).sum() / ((p * p).sum() + (t * t).sum())


def test_bce_half_prediction():
    target = np.array([[0, 1], [1, 0]])
    assert bce_loss(np.full((2, 2), 0.5), target) == pytest.approx(math.log(2), abs=1e-9)


def test_bce_perfect_prediction_near_zero():
    t = np.array([0.0, 1.0, 1.0, 0.0])
    assert bce_loss(t, t) == pytest.approx(-math.log(1 - BCE_EPS), rel=1e-3)
    assert bce_loss(t, t) < 1e-6


def test_bce_hand_case():
    val = bce_loss(np.array([0.9, 0.2]), np.array([1, 0]))
    assert val == pytest.approx((-math.log(0.9) - math.log(0.8)) / 2, abs=1e-9)
    assert val == pytest.approx(0.16425, abs=1e-4)


def test_dice_perfect():
    t = np.array([1, 0, 1, 1, 0])
    assert dice_loss(t, t) == pytest.approx(0.0, abs=1e-12)


def test_dice_disjoint():
    assert dice_loss(np.array([1, 1, 0, 0]), np.array([0, 0, 1, 1])) == pytest.approx(1.0)


def test_dice_hand_case():
    assert dice_loss(np.array([1, 1, 0, 0]), np.array([1, 0, 1, 0])) == pytest.approx(0.5, abs=1e-9)


def test_dice_both_empty():
    z = np.zeros(4)
    assert dice_loss(z, z) == 0.0


def test_combined_degenerate_weights():
    rng = np.random.default_rng(0)
    pred = rng.uniform(0.01, 0.99, size=(8, 8))
    target = (rng.random((8, 8)) > 0.5).astype(float)
    assert combined_loss(pred, target, LossWeights(1, 0)) == pytest.approx(bce_loss(pred, target))
    assert combined_loss(pred, target, LossWeights(0, 1)) == pytest.approx(dice_loss(pred, target))


def test_combined_hand_case():
    # uniform 0.5 prediction against a half-ones target
    pred = np.full(8, 0.5)
    target = np.array([1, 1, 1, 1, 0, 0, 0, 0], float)
    expected = bce_oracle(pred, target) + dice_oracle(pred, target)
    assert combined_loss(pred, target, LossWeights(1, 1)) == pytest.approx(expected, abs=1e-9)
    assert dice_oracle(pred, target) == pytest.approx(1 / 3)


def test_invalid_weights():
    with pytest.raises(InvalidConfig):
        LossWeights(0, 0).validate()
    with pytest.raises(InvalidConfig):
        LossWeights(-1, 1).validate()


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        bce_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def _fd_gradient(fn, pred, h=1e-6):
    grad = np.zeros_like(pred)
    for idx in np.ndindex(pred.shape):
        up, dn = pred.copy(), pred.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (fn(up) - fn(dn)) / (2 * h)
    return grad


@pytest.mark.parametrize("loss_name", ["bce", "dice", "combined"])
def test_gradients_match_finite_differences(loss_name):
    rng = np.random.default_rng(42)
    target = (rng.random((8, 8)) > 0.5).astype(float)
    pred = rng.uniform(0.05, 0.95, size=(8, 8))
    fns = {
        "bce": lambda p: bce_loss(p, target),
        "dice": lambda p: dice_loss(p, target, smooth=1.0),
        "combined": lambda p: combined_loss(p, target, LossWeights(1, 1), smooth=1.0),
    }
    fn = fns[loss_name]
    x = torch.tensor(pred, dtype=torch.float64, requires_grad=True)
    fn(x).backward()
    fd = _fd_gradient(fn, pred)
    rel = np.abs(x.grad.numpy() - fd) / np.maximum(np.abs(fd), 1e-8)
    assert rel.max() <= 1e-4


binary_masks = arrays(np.int8, (4, 4), elements=st.integers(0, 1))
prob_maps = arrays(np.float64, (4, 4), elements=st.floats(0.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(pred=prob_maps, target=binary_masks)
def test_loss_ranges(pred, target):
    assert -1e-9 <= dice_loss(pred, target) <= 1.0 + 1e-9
    assert bce_loss(pred, target) >= 0.0
    assert combined_loss(pred, target, LossWeights(0.5, 2.0)) >= 0.0


@settings(max_examples=60, deadline=None)
@given(a=binary_masks, b=binary_masks)
def test_dice_symmetric_for_binary(a, b):
    assert dice_loss(a, b) == pytest.approx(dice_loss(b, a))
