"""
Frame streams synthesized from a phantom, with optional breathing-like motion.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from ...errors import require
from ..stream import FrameStream

logger = logging.getLogger("vesselseg.phantom")

DEFAULT_PEAK_COUNTS = 60000
U16_MAX = 65535


class MotionKind(str, Enum):
    STATIC = "static"
    SINUSOIDAL = "sin"


class ShotNoise(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


@dataclass(frozen=True)
class MotionModel:
    """Rigid vertical displacement over time."""

    amplitude_px: float = 0.0
    period_s: float = 4.0
    kind: MotionKind = MotionKind.STATIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MotionKind(self.kind))
        require(self.amplitude_px >= 0.0, f"amplitude must be >= 0, got {self.amplitude_px}")
        if self.kind is MotionKind.SINUSOIDAL:
            require(self.period_s > 0.0, f"period must be > 0, got {self.period_s}")

    def displacement(self, t: float) -> float:
        """Displacement in pixels at time ``t`` seconds."""
        if self.kind is MotionKind.STATIC:
            return 0.0
        return self.amplitude_px * float(np.sin(2.0 * np.pi * t / self.period_s))


def gen_stream(
    phantom: np.ndarray,
    mask: np.ndarray,
    n_frames: int,
    fps: float = 19.6,
    motion: MotionModel = MotionModel(),
    noise_scale: float = 0.0,
    seed: int = 0,
    peak_counts: int = DEFAULT_PEAK_COUNTS,
    shot_noise: ShotNoise = ShotNoise.GAUSSIAN,
) -> FrameStream:
    """
    Synthesize ``n_frames`` u16 frames of ``phantom``.

    Each frame is the phantom shifted by the rounded motion displacement,
    scaled to ``peak_counts`` and perturbed by shot-like noise whose relative
    standard deviation at full brightness is ``noise_scale``.
    """
    require(n_frames >= 1, f"n_frames must be >= 1, got {n_frames}")
    require(noise_scale >= 0.0, f"noise_scale must be >= 0, got {noise_scale}")
    require(1 <= peak_counts <= U16_MAX, f"peak_counts must lie in 1..{U16_MAX}, got {peak_counts}")
    phantom = np.clip(np.asarray(phantom, dtype=np.float64), 0.0, 1.0)
    require(
        phantom.ndim == 2 and phantom.shape == np.asarray(mask).shape,
        f"phantom {phantom.shape} and mask {np.asarray(mask).shape} must be equal 2-D shapes",
    )
    shot_noise = ShotNoise(shot_noise)
    rng = np.random.default_rng(seed)

    frames = np.empty((n_frames,) + phantom.shape, dtype=np.uint16)
    for i in range(n_frames):
        shift = int(round(motion.displacement(i / fps)))
        signal = ndimage.shift(phantom, (shift, 0), order=0, mode="nearest") if shift else phantom
        if noise_scale == 0.0:
            counts = signal * peak_counts
        elif shot_noise is ShotNoise.GAUSSIAN:
            counts = (signal + rng.normal(0.0, 1.0, signal.shape) * noise_scale * np.sqrt(signal)) * peak_counts
        else:
            quanta = 1.0 / noise_scale**2
            counts = rng.poisson(signal * quanta) / quanta * peak_counts
        frames[i] = np.clip(np.rint(counts), 0, U16_MAX).astype(np.uint16)

    logger.debug(
        "generated %d frames (%s motion, noise %.3g, %s)", n_frames, motion.kind.value, noise_scale, shot_noise.value
    )
    return FrameStream(frames=frames, fps=fps)


def accumulation_snr(image: np.ndarray, reference: np.ndarray) -> float:
    """
    SNR in dB of ``image`` against ``reference``.

    ``image`` is fit as a * reference + b by least squares; the result is the
    variance of the fit over the variance of the residual.
    """
    x = np.asarray(reference, dtype=np.float64).ravel()
    y = np.asarray(image, dtype=np.float64).ravel()
    require(x.shape == y.shape, f"image and reference sizes differ: {y.size} vs {x.size}")
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fit = design @ coef
    noise = float(np.var(y - fit))
    if noise == 0.0:
        return float("inf")
    return 10.0 * float(np.log10(np.var(fit) / noise))
