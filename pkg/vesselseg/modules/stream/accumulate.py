"""
Cumulative and gated sub-cumulative images.

Counts are summed as int64 and min-max normalized afterwards, so windows of
different gate lengths share one dynamic range.
"""

from typing import List, NamedTuple

import numpy as np

from ...errors import require
from ..data import normalize
from .stream import FrameStream, GateSpec


class Window(NamedTuple):
    start: int
    image: np.ndarray


def accumulate_counts(stream: FrameStream, start: int, count: int) -> np.ndarray:
    """Raw int64 sum of frames [start, start + count)."""
    require(count >= 1, f"empty frame range (count={count})")
    require(
        0 <= start and start + count <= stream.n_frames,
        f"frame range [{start}, {start + count}) outside 0..{stream.n_frames}",
    )
    return stream.frames[start : start + count].sum(axis=0, dtype=np.int64)


def accumulate(stream: FrameStream, start: int = 0, count: int = -1) -> np.ndarray:
    """Normalized sum of ``count`` frames from ``start``; count -1 means to the end."""
    if count == -1:
        count = stream.n_frames - start
    return normalize(accumulate_counts(stream, start, count))


def subcumulative_windows(stream: FrameStream, spec: GateSpec) -> List[Window]:
    """Windows at 0, stride, 2*stride, ... while start + gate <= n_frames."""
    spec.validate(stream.n_frames)
    starts = range(0, stream.n_frames - spec.gate_frames + 1, spec.stride)
    return [Window(s, accumulate(stream, s, spec.gate_frames)) for s in starts]
