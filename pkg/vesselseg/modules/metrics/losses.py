"""
Training objective: lambda1 * Dice loss + lambda2 * binary cross entropy.

Every loss returns ``(value, grad)`` where ``grad`` is d(value)/d(pred) with
the shape of ``pred``. Pixel weights are uniform.
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

BCE_CLAMP = 1e-7


class LossWeights(BaseModel):
    """Balance between the Dice and cross-entropy terms."""

    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(default=1.0, ge=0.0)
    lambda2: float = Field(default=0.1, ge=0.0)
    dice_smooth: float = Field(default=1e-5, gt=0.0)


def _as_batch(pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target).astype(pred.dtype if pred.dtype.kind == "f" else np.float64)
    if target.shape != pred.shape:
        target = target.reshape(pred.shape)
    return pred, target


def dice_loss(pred: np.ndarray, target: np.ndarray, smooth: float = 1e-5) -> Tuple[float, np.ndarray]:
    """
    Soft Dice loss averaged over the batch.

    Per sample: 1 - (2 * sum(p * t) + smooth) / (sum(p) + sum(t) + smooth).
    """
    pred, target = _as_batch(pred, target)
    n = pred.shape[0]
    axes = tuple(range(1, pred.ndim))
    p64 = pred.astype(np.float64)
    t64 = target.astype(np.float64)
    intersection = (p64 * t64).sum(axis=axes)
    denom = p64.sum(axis=axes) + t64.sum(axis=axes) + smooth
    numer = 2.0 * intersection + smooth
    loss = float(np.mean(1.0 - numer / denom))

    shape = (n,) + (1,) * (pred.ndim - 1)
    d_numer = 2.0 * t64
    grad = -(d_numer * denom.reshape(shape) - numer.reshape(shape)) / (denom.reshape(shape) ** 2)
    return loss, (grad / n).astype(pred.dtype)


def bce_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean binary cross entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    pred, target = _as_batch(pred, target)
    p64 = pred.astype(np.float64)
    t64 = target.astype(np.float64)
    clamped = np.clip(p64, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(np.mean(-(t64 * np.log(clamped) + (1.0 - t64) * np.log(1.0 - clamped))))

    inside = (p64 >= BCE_CLAMP) & (p64 <= 1.0 - BCE_CLAMP)
    grad = (-t64 / clamped + (1.0 - t64) / (1.0 - clamped)) / p64.size
    grad = np.where(inside, grad, 0.0)
    return loss, grad.astype(pred.dtype)


def combined_loss(
    pred: np.ndarray, target: np.ndarray, weights: LossWeights = LossWeights()
) -> Tuple[float, np.ndarray]:
    """lambda1 * dice_loss + lambda2 * bce_loss, with the matching weighted gradient."""
    dice, dice_grad = dice_loss(pred, target, weights.dice_smooth)
    bce, bce_grad = bce_loss(pred, target)
    value = weights.lambda1 * dice + weights.lambda2 * bce
    grad = weights.lambda1 * dice_grad.astype(np.float64) + weights.lambda2 * bce_grad.astype(np.float64)
    return value, grad.astype(np.asarray(pred).dtype)
