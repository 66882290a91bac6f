"""
Phantom Module - Black Box Interface

Purpose: Deterministic synthetic vessel images, masks and frame streams
Interface: PhantomParams, gen_phantom(), write_phantom_set(), MotionModel,
           gen_stream(), accumulation_snr()
Hidden: Random-walk growth, rendering styles, noise sampling
"""

from .motion import (
    DEFAULT_PEAK_COUNTS,
    MotionKind,
    MotionModel,
    ShotNoise,
    accumulation_snr,
    gen_stream,
)
from .phantom import PhantomParams, gen_phantom, rasterize, write_phantom_set

__all__ = [
    "DEFAULT_PEAK_COUNTS",
    "MotionKind",
    "MotionModel",
    "PhantomParams",
    "ShotNoise",
    "accumulation_snr",
    "gen_phantom",
    "gen_stream",
    "rasterize",
    "write_phantom_set",
]
