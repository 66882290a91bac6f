"""
ROI cropping and non-overlapping tiled inference.

Each tile is a separate batch-of-one forward pass, so a stitched tile is
bitwise equal to running that tile alone.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np

from ...errors import require
from ..metrics import BinaryMask, binarize
from ..nn import Mode
from ..segresnet import Model

logger = logging.getLogger("vesselseg.stream")

MAX_ROI_PATCHES = 4


def roi_crop_multiple(
    image: np.ndarray,
    anchor: Tuple[int, int],
    n_patches: Tuple[int, int],
    patch: int = 224,
) -> np.ndarray:
    """Return the (nr * patch) x (nc * patch) sub-image whose top-left corner is ``anchor``."""
    nr, nc = n_patches
    require(
        1 <= nr <= MAX_ROI_PATCHES and 1 <= nc <= MAX_ROI_PATCHES,
        f"ROI patch counts must lie in 1..{MAX_ROI_PATCHES}, got {nr}x{nc}",
    )
    row, col = anchor
    h, w = image.shape[:2]
    rows, cols = nr * patch, nc * patch
    require(
        row >= 0 and col >= 0 and row + rows <= h and col + cols <= w,
        f"crop {rows}x{cols} at ({row}, {col}) exceeds image {h}x{w}: "
        f"anchor row must lie in 0..{h - rows}, col in 0..{w - cols}",
    )
    return image[row : row + rows, col : col + cols]


def _tile_origins(shape: Tuple[int, int], patch: int):
    h, w = shape
    return [(r, c) for r in range(0, h, patch) for c in range(0, w, patch)]


def tiled_predict(
    model: Model,
    image: np.ndarray,
    patch: Optional[int] = None,
    max_workers: int = 1,
) -> np.ndarray:
    """
    Stitched foreground probabilities for an image whose sides are multiples of ``patch``.

    Tiles may run on a thread pool; assembly is by tile position.
    """
    patch = patch or model.config.patch_size
    require(
        patch == model.config.patch_size,
        f"tile size {patch} differs from the model patch size {model.config.patch_size}",
    )
    image = np.asarray(image)
    require(image.ndim == 2, f"tiled inference expects a 2-D image, got shape {image.shape}")
    h, w = image.shape
    require(
        h % patch == 0 and w % patch == 0 and h > 0 and w > 0,
        f"image {h}x{w} is not a multiple of the {patch}px patch; crop with roi_crop_multiple first",
    )
    origins = _tile_origins((h, w), patch)

    def run(origin: Tuple[int, int]) -> np.ndarray:
        r, c = origin
        tile = image[r : r + patch, c : c + patch][None, None]
        return model.forward(tile, Mode.INFER)[0, 0]

    if max_workers > 1 and len(origins) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            tiles = list(pool.map(run, origins))
    else:
        tiles = [run(o) for o in origins]

    out = np.empty((h, w), dtype=model.dtype)
    for (r, c), prob in zip(origins, tiles):
        out[r : r + patch, c : c + patch] = prob
    return out


def tiled_infer(
    model: Model,
    image: np.ndarray,
    patch: Optional[int] = None,
    theta: float = 0.5,
    max_workers: int = 1,
) -> BinaryMask:
    """Binarized tiled_predict."""
    return binarize(tiled_predict(model, image, patch, max_workers), theta)
