"""
Online augmentation: horizontal flip, quarter-turn rotation and Gaussian noise.

The three draws are independent. Geometric ops act on image and mask alike;
noise touches the image only.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .patches import PatchRecord


class AugmentPolicy(BaseModel):
    """Per-record augmentation probabilities."""

    model_config = ConfigDict(frozen=True)

    p_hflip: float = Field(default=0.33, ge=0.0, le=1.0)
    p_rot: float = Field(default=0.33, ge=0.0, le=1.0)
    rot_angles: Tuple[int, ...] = (90, 180, 270)
    p_noise: float = Field(default=0.5, ge=0.0, le=1.0)
    noise_max_magnitude: float = Field(default=0.25, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("rot_angles")
    @classmethod
    def validate_angles(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        """Angles must be non-empty multiples of 90."""
        if not v:
            raise ValueError("rot_angles must not be empty")
        for angle in v:
            if angle % 90 != 0:
                raise ValueError(f"rotation angle {angle} is not a multiple of 90")
        return tuple(int(a) for a in v)

    @classmethod
    def disabled(cls) -> "AugmentPolicy":
        return cls(p_hflip=0.0, p_rot=0.0, p_noise=0.0)


@dataclass(frozen=True)
class AugmentDraw:
    """The concrete choices for one record; angle 0 and sigma 0 mean skipped."""

    hflip: bool = False
    angle: int = 0
    noise_sigma: float = 0.0


def draw_augmentation(policy: AugmentPolicy, rng: np.random.Generator) -> AugmentDraw:
    """Sample which augmentations apply, in a fixed draw order."""
    hflip = bool(rng.random() < policy.p_hflip)
    angle = 0
    if rng.random() < policy.p_rot:
        angle = int(policy.rot_angles[rng.integers(len(policy.rot_angles))])
    sigma = 0.0
    if rng.random() < policy.p_noise:
        # uniform on (0, max]
        sigma = policy.noise_max_magnitude * (1.0 - rng.random())
    return AugmentDraw(hflip=hflip, angle=angle, noise_sigma=sigma)


def apply_augmentation(
    record: PatchRecord, draw: AugmentDraw, rng: np.random.Generator
) -> PatchRecord:
    image, mask = record.image, record.mask
    if draw.hflip:
        image, mask = image[:, ::-1], mask[:, ::-1]
    k = (draw.angle // 90) % 4
    if k:
        image, mask = np.rot90(image, k), np.rot90(mask, k)
    if draw.noise_sigma > 0.0:
        noise = rng.normal(0.0, draw.noise_sigma, size=image.shape)
        image = np.clip(image + noise, 0.0, 1.0).astype(record.image.dtype)
    return record.with_arrays(np.ascontiguousarray(image), np.ascontiguousarray(mask))


def augment(record: PatchRecord, policy: AugmentPolicy, rng: np.random.Generator) -> PatchRecord:
    """Draw and apply one augmentation."""
    return apply_augmentation(record, draw_augmentation(policy, rng), rng)
