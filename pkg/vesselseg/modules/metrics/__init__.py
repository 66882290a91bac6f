"""
Metrics Module - Black Box Interface

Purpose: Training losses, evaluation metrics and mask utilities
Interface: dice_loss(), bce_loss(), combined_loss(), LossWeights,
           dice_score(), iou_score(), boundary_iou(), largest_component(), binarize()
Hidden: Smoothing and clamping details, morphology backend
"""

from .losses import BCE_CLAMP, LossWeights, bce_loss, combined_loss, dice_loss
from .scores import (
    BinaryMask,
    as_mask,
    binarize,
    boundary_band,
    boundary_iou,
    dice_score,
    iou_score,
    largest_component,
)

__all__ = [
    "BCE_CLAMP",
    "BinaryMask",
    "LossWeights",
    "as_mask",
    "bce_loss",
    "binarize",
    "boundary_band",
    "boundary_iou",
    "combined_loss",
    "dice_loss",
    "dice_score",
    "iou_score",
    "largest_component",
]
