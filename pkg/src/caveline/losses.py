"""Training objective: pixel-wise BCE, Dice overlap loss, and their weighted sum.

All three accept numpy arrays or torch tensors of matching shape. Given
tensors they stay differentiable and return a 0-d tensor; given arrays they
return a plain float.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidConfig, ShapeMismatch

BCE_EPS = 1e-7


@dataclass
class LossWeights:
    lambda_ce: float = 1.0
    lambda_dice: float = 1.0

    def validate(self) -> "LossWeights":
        if self.lambda_ce < 0 or self.lambda_dice < 0:
            raise InvalidConfig("loss weights must be nonnegative")
        if self.lambda_ce == 0 and self.lambda_dice == 0:
            raise InvalidConfig("at least one loss weight must be positive")
        return self


def _as_pair(pred, target) -> tuple[torch.Tensor, torch.Tensor, bool]:
    was_tensor = isinstance(pred, torch.Tensor)
    p = pred if was_tensor else torch.as_tensor(np.asarray(pred, dtype=np.float64))
    t = target if isinstance(target, torch.Tensor) else torch.as_tensor(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise ShapeMismatch(f"pred {tuple(p.shape)} vs target {tuple(t.shape)}")
    return p, t.to(p.dtype), was_tensor


def _ret(value: torch.Tensor, was_tensor: bool):
    return value if was_tensor else float(value)


def bce_loss(pred, target):
    """Mean per-pixel binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    p, t, was_tensor = _as_pair(pred, target)
    p = p.clamp(BCE_EPS, 1.0 - BCE_EPS)
    loss = -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()
    return _ret(loss, was_tensor)


def dice_loss(pred, target, smooth: float = 0.0):
    """Dice overlap loss: 1 - 2<y,yhat> / (|y|^2 + |yhat|^2).

    `smooth` is added to numerator and denominator; with the default 0.0 the
    value matches the unsmoothed definition exactly and the degenerate
    both-empty case returns 0.0 (perfect agreement) instead of dividing by
    zero. Training uses a positive smooth so gradients exist everywhere.
    """
    p, t, was_tensor = _as_pair(pred, target)
    inter = (p * t).sum()
    denom = (p * p).sum() + (t * t).sum()
    if smooth == 0.0 and float(denom) == 0.0:
        return _ret(torch.zeros((), dtype=p.dtype), was_tensor)
    loss = 1.0 - (2.0 * inter + smooth) / (denom + smooth)
    return _ret(loss, was_tensor)


def combined_loss(pred, target, weights: LossWeights = LossWeights(), smooth: float = 0.0):
    """Weighted sum lambda_ce * BCE + lambda_dice * Dice."""
    weights.validate()
    p, t, was_tensor = _as_pair(pred, target)
    total = weights.lambda_ce * bce_loss(p, t) + weights.lambda_dice * dice_loss(p, t, smooth=smooth)
    return _ret(total, was_tensor)
