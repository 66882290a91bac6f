"""
Patch records and the deterministic transformations that produce them.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ...errors import require

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class Domain(str, Enum):
    """Which side of the transfer a patch belongs to."""

    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True, eq=False)
class PatchRecord:
    """One (image, mask) training pair cut from a source image."""

    image: np.ndarray
    mask: np.ndarray
    source_id: str
    grid_pos: Tuple[int, int] = (0, 0)
    domain: Domain = Domain.SOURCE

    def __post_init__(self) -> None:
        require(
            self.image.ndim == 2 and self.image.shape == self.mask.shape,
            f"patch image {self.image.shape} and mask {self.mask.shape} must be equal 2-D shapes",
        )

    @property
    def patch_size(self) -> int:
        return self.image.shape[0]

    @property
    def label_fraction(self) -> float:
        return float(np.count_nonzero(self.mask)) / self.mask.size

    def with_arrays(self, image: np.ndarray, mask: np.ndarray) -> "PatchRecord":
        return replace(self, image=image, mask=mask)


def to_grayscale(rgb_image: np.ndarray) -> np.ndarray:
    """Luminance of an 8-bit RGB image, scaled to [0, 1]."""
    rgb = np.asarray(rgb_image)
    require(
        rgb.ndim == 3 and rgb.shape[2] == 3,
        f"to_grayscale expects 3 channels, got shape {rgb.shape}",
    )
    luma = rgb.astype(np.float64) @ np.asarray(LUMA_WEIGHTS)
    return (luma / 255.0).astype(np.float32)


def normalize(image: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant image maps to zeros."""
    arr = np.asarray(image, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.float32)
    return ((arr - lo) / (hi - lo)).astype(np.float32)


def extract_patch_grid(
    image: np.ndarray,
    mask: np.ndarray,
    grid_n: int,
    patch: int = 224,
    centered: bool = True,
    source_id: str = "image",
    domain: Domain = Domain.SOURCE,
) -> List[PatchRecord]:
    """
    Cut a grid_n x grid_n grid of non-overlapping patches in row-major order.

    With ``centered`` the grid covers the central (grid_n * patch) square,
    otherwise it starts at the top-left corner.
    """
    require(grid_n >= 1 and patch >= 1, f"grid_n and patch must be >= 1, got {grid_n}, {patch}")
    image = np.asarray(image)
    mask = np.asarray(mask)
    require(image.shape == mask.shape, f"image {image.shape} and mask {mask.shape} differ")
    side = grid_n * patch
    h, w = image.shape
    require(
        h >= side and w >= side,
        f"image {h}x{w} too small: grid {grid_n}x{grid_n} of {patch}px needs at least {side}x{side}",
    )
    top = (h - side) // 2 if centered else 0
    left = (w - side) // 2 if centered else 0

    records = []
    for row in range(grid_n):
        for col in range(grid_n):
            r0, c0 = top + row * patch, left + col * patch
            records.append(
                PatchRecord(
                    image=image[r0 : r0 + patch, c0 : c0 + patch].copy(),
                    mask=mask[r0 : r0 + patch, c0 : c0 + patch].astype(np.uint8),
                    source_id=source_id,
                    grid_pos=(row, col),
                    domain=Domain(domain),
                )
            )
    return records


def filter_by_label_area(records: Sequence[PatchRecord], min_fraction: float = 0.05) -> List[PatchRecord]:
    """Keep patches whose labelled fraction strictly exceeds ``min_fraction``."""
    return [r for r in records if np.count_nonzero(r.mask) / r.mask.size > min_fraction]


def _split_count(n: int, fraction: float) -> int:
    return min(max(int(round(n * fraction)), 1), n - 1)


def split_train_val(
    records: Sequence[PatchRecord], val_fraction: float = 0.1, seed: int = 0
) -> Tuple[List[PatchRecord], List[PatchRecord]]:
    """Seeded shuffle, then the first round(n * val_fraction) records form the validation split."""
    require(0.0 < val_fraction < 1.0, f"val_fraction must lie in (0, 1), got {val_fraction}")
    require(len(records) >= 2, f"need at least 2 records to split, got {len(records)}")
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = _split_count(len(records), val_fraction)
    val = [records[i] for i in order[:n_val]]
    train = [records[i] for i in order[n_val:]]
    return train, val


def split_by_source(
    records: Sequence[PatchRecord], test_fraction: float = 0.2, seed: int = 0
) -> Tuple[List[PatchRecord], List[PatchRecord]]:
    """
    Hold out whole source images.

    Every patch of one source lands on the same side; both sides get at
    least one source. Record order within each side follows the input.
    """
    require(0.0 < test_fraction < 1.0, f"test_fraction must lie in (0, 1), got {test_fraction}")
    groups: Dict[str, List[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.source_id, []).append(i)
    sources = sorted(groups)
    require(len(sources) >= 2, f"need at least 2 sources to split, got {len(sources)}")
    order = np.random.default_rng(seed).permutation(len(sources))
    n_test = _split_count(len(sources), test_fraction)
    test_sources = {sources[i] for i in order[:n_test]}
    rest = [r for r in records if r.source_id not in test_sources]
    test = [r for r in records if r.source_id in test_sources]
    return rest, test
