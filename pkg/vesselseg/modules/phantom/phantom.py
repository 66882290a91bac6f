"""
Procedural vessel phantoms with exact ground truth.

Vessel trees are smoothed random walks with tapering radius. The mask is the
union of the disks swept along each centerline; the image darkens exactly
those pixels and is then rendered in one of two domain styles:

- source: bright textured background with a linear illumination gradient
- target: bright super-Gaussian beam footprint with signal-dependent grain
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy import ndimage

from ...errors import require
from ..data import Domain, ManifestEntry, normalize, quantize_unit, write_manifest, write_pgm

logger = logging.getLogger("vesselseg.phantom")

STEP_PX = 0.5
TURN_SD = 0.02
MAX_BRANCHES_PER_TREE = 2


@dataclass(frozen=True)
class PhantomParams:
    """Knobs for one synthetic image."""

    size: int = 64
    n_trees: int = 2
    branch_prob: float = 0.08
    radius_px: Tuple[float, float] = (1.0, 2.0)
    vessel_contrast: float = 0.6
    background_gradient: float = 0.3
    style: Domain = Domain.SOURCE
    seed: int = 0
    walk_fraction: float = field(default=0.9, repr=False)

    def validate(self) -> "PhantomParams":
        require(self.size >= 32, f"phantom size must be >= 32, got {self.size}")
        require(self.n_trees >= 0, f"n_trees must be >= 0, got {self.n_trees}")
        require(0.0 <= self.branch_prob <= 1.0, f"branch_prob must lie in [0, 1], got {self.branch_prob}")
        lo, hi = self.radius_px
        require(1.0 <= lo <= hi, f"radius range must satisfy 1 <= min <= max, got {self.radius_px}")
        require(
            0.0 < self.vessel_contrast <= 1.0,
            f"vessel_contrast must lie in (0, 1], got {self.vessel_contrast}",
        )
        require(self.background_gradient >= 0.0, "background_gradient must be >= 0")
        return self

    def with_seed(self, seed: int) -> "PhantomParams":
        return replace(self, seed=seed)


@dataclass
class _Walker:
    row: float
    col: float
    heading: float
    radius: float
    steps: int


def _centerlines(params: PhantomParams, rng: np.random.Generator) -> List[np.ndarray]:
    """(k, 3) arrays of (row, col, radius) samples, one per vessel segment."""
    size = params.size
    lo, hi = params.radius_px
    segments = []
    total_steps = int(params.walk_fraction * size / STEP_PX)
    for _ in range(params.n_trees):
        # enter from a random border point heading at a random interior point
        side = rng.integers(4)
        t = rng.uniform(0.1, 0.9) * (size - 1)
        start = [(0.0, t), (size - 1.0, t), (t, 0.0), (t, size - 1.0)][side]
        aim = rng.uniform(0.3, 0.7, size=2) * (size - 1)
        heading = float(np.arctan2(aim[0] - start[0], aim[1] - start[1]))
        pending = [_Walker(start[0], start[1], heading, rng.uniform(lo, hi), total_steps)]
        branches = 0
        while pending:
            w = pending.pop(0)
            end_radius = max(1.0, 0.6 * w.radius)
            points = []
            turn = 0.0
            for i in range(w.steps):
                if not (-1.0 <= w.row <= size and -1.0 <= w.col <= size):
                    break
                r = w.radius + (end_radius - w.radius) * i / max(w.steps - 1, 1)
                points.append((w.row, w.col, r))
                turn = 0.8 * turn + rng.normal(0.0, TURN_SD)
                w.heading += turn
                w.row += STEP_PX * np.sin(w.heading)
                w.col += STEP_PX * np.cos(w.heading)
                if (
                    branches < MAX_BRANCHES_PER_TREE
                    and i % 4 == 0
                    and rng.random() < params.branch_prob
                ):
                    branches += 1
                    sign = 1.0 if rng.random() < 0.5 else -1.0
                    pending.append(
                        _Walker(
                            w.row,
                            w.col,
                            w.heading + sign * rng.uniform(0.4, 0.9),
                            max(1.0, 0.8 * r),
                            int(0.6 * (w.steps - i)),
                        )
                    )
            if points:
                segments.append(np.asarray(points))
    return segments


def rasterize(segments: List[np.ndarray], size: int) -> np.ndarray:
    """Union of disks centred on every centerline sample (pixel centres at integer coords)."""
    mask = np.zeros((size, size), dtype=bool)
    for seg in segments:
        for row, col, r in seg:
            r0, r1 = max(int(np.floor(row - r)), 0), min(int(np.ceil(row + r)), size - 1)
            c0, c1 = max(int(np.floor(col - r)), 0), min(int(np.ceil(col + r)), size - 1)
            if r0 > r1 or c0 > c1:
                continue
            rr, cc = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
            mask[r0 : r1 + 1, c0 : c1 + 1] |= (rr - row) ** 2 + (cc - col) ** 2 <= r * r
    return mask.astype(np.uint8)


def _source_background(params: PhantomParams, rng: np.random.Generator) -> np.ndarray:
    size = params.size
    ramp_dir = rng.uniform(0.0, 2 * np.pi)
    rr, cc = np.mgrid[0:size, 0:size] / (size - 1) - 0.5
    ramp = params.background_gradient * (rr * np.sin(ramp_dir) + cc * np.cos(ramp_dir))
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (size, size)), sigma=3.0)
    texture /= max(float(np.abs(texture).max()), 1e-12)
    return 0.7 + ramp + 0.08 * texture


def _beam_footprint(params: PhantomParams, rng: np.random.Generator) -> np.ndarray:
    size = params.size
    centre = (size - 1) / 2 + rng.uniform(-0.08, 0.08, size=2) * size
    radius = 0.5 * size * rng.uniform(0.85, 1.05)
    rr, cc = np.mgrid[0:size, 0:size]
    dist = np.hypot(rr - centre[0], cc - centre[1]) / radius
    beam = np.exp(-(dist**6))
    return 0.25 + 0.65 * beam


def gen_phantom(params: PhantomParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render one phantom.

    Returns:
        (image, mask): float32 image min-max normalized to [0, 1] and its uint8 0/1 mask
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    mask = rasterize(_centerlines(params, rng), params.size)
    vessels = mask.astype(np.float64)

    if Domain(params.style) is Domain.SOURCE:
        background = _source_background(params, rng)
        image = background * (1.0 - params.vessel_contrast * vessels)
        image = ndimage.gaussian_filter(image, sigma=0.5)
    else:
        beam = _beam_footprint(params, rng)
        image = beam * (1.0 - params.vessel_contrast * vessels)
        image = ndimage.gaussian_filter(image, sigma=0.5)
        grain = rng.normal(0.0, 1.0, image.shape) * np.sqrt(np.clip(image, 0.0, None)) * 0.04
        image = image + grain
    return normalize(np.clip(image, 0.0, None)), mask


def write_phantom_set(
    style: Domain,
    seed: int,
    size: int,
    count: int,
    out_dir: Union[str, Path],
    params: Union[PhantomParams, None] = None,
) -> Path:
    """
    Write ``count`` phantoms (seeds seed .. seed + count - 1) as 16-bit PGM
    images with 8-bit masks plus a ``manifest.csv``.
    """
    require(count >= 1, f"count must be >= 1, got {count}")
    style = Domain(style)
    base = replace(params or PhantomParams(), size=size, style=style)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(count):
        s = seed + k
        image, mask = gen_phantom(base.with_seed(s))
        source_id = f"{style.value}-{s}"
        image_path = write_pgm(quantize_unit(image, bits=16), out_dir / f"{source_id}.pgm")
        mask_path = write_pgm((mask * 255).astype(np.uint8), out_dir / f"{source_id}_mask.pgm")
        entries.append(ManifestEntry(image_path, mask_path, style, source_id))
    manifest = write_manifest(entries, out_dir / "manifest.csv")
    logger.info("wrote %d %s phantoms of %dpx to %s", count, style.value, size, out_dir)
    return manifest
