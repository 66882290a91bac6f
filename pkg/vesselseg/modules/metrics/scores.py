"""
Overlap metrics and mask utilities.

Masks are uint8 arrays holding only 0 and 1. When both masks (or both
boundary bands) are empty the metric is 1.0.
"""

import numpy as np
from scipy import ndimage

from ...errors import require

BinaryMask = np.ndarray


def as_mask(values: np.ndarray) -> BinaryMask:
    """Validate and convert to a uint8 0/1 mask."""
    arr = np.asarray(values)
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    require(
        bool(np.isin(arr, (0, 1)).all()),
        "binary mask must contain only 0 and 1",
    )
    return arr.astype(np.uint8)


def _pair(a: np.ndarray, b: np.ndarray) -> tuple:
    a, b = np.asarray(a), np.asarray(b)
    require(a.shape == b.shape, f"mask shape mismatch: {a.shape} vs {b.shape}")
    return a.astype(bool), b.astype(bool)


def dice_score(a: BinaryMask, b: BinaryMask) -> float:
    """2|A n B| / (|A| + |B|)."""
    a, b = _pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def iou_score(a: BinaryMask, b: BinaryMask) -> float:
    """|A n B| / |A u B|."""
    a, b = _pair(a, b)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def boundary_band(mask: BinaryMask, d: int) -> np.ndarray:
    """
    Pixels of ``mask`` within Chebyshev distance ``d`` of the complement.

    Pixels outside the image count as complement.
    """
    require(d >= 1, f"boundary distance must be >= 1, got {d}")
    m = np.asarray(mask).astype(bool)
    padded = np.pad(~m, d, constant_values=True)
    near = ndimage.binary_dilation(padded, structure=np.ones((3, 3), dtype=bool), iterations=d)
    return near[d:-d, d:-d] & m


def boundary_iou(a: BinaryMask, b: BinaryMask, d: int = 2) -> float:
    """IoU of the boundary bands of two masks."""
    a, b = _pair(a, b)
    return iou_score(boundary_band(a, d), boundary_band(b, d))


def largest_component(mask: BinaryMask, connectivity: int = 8) -> BinaryMask:
    """
    Keep only the largest connected component.

    Ties go to the component whose first pixel comes earliest in row-major order.
    """
    require(connectivity in (4, 8), f"connectivity must be 4 or 8, got {connectivity}")
    m = np.asarray(mask).astype(bool)
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, count = ndimage.label(m, structure=structure)
    if count == 0:
        return np.zeros(m.shape, dtype=np.uint8)
    index = np.arange(1, count + 1)
    areas = ndimage.sum_labels(np.ones(m.shape), labels, index)
    first_pixel = ndimage.minimum(np.arange(m.size).reshape(m.shape), labels, index)
    order = np.lexsort((first_pixel, -areas))
    keep = index[order[0]]
    return (labels == keep).astype(np.uint8)


def binarize(prob: np.ndarray, theta: float = 0.5) -> BinaryMask:
    """1 where prob >= theta."""
    require(0.0 < theta < 1.0, f"threshold must lie in (0, 1), got {theta}")
    return (np.asarray(prob) >= theta).astype(np.uint8)
