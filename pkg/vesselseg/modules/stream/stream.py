"""
Frame streams and the CVS1 container.

CVS1 layout (little-endian):
    "CVS1" | u32 width | u32 height | u32 n_frames | f32 fps | u8 bit depth (16) | 3 zero bytes |
    n_frames x (height x width) u16 samples, row-major
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ...errors import FormatError, require

logger = logging.getLogger("vesselseg.stream")

MAGIC = b"CVS1"
HEADER = struct.Struct("<IIIfB3x")
BIT_DEPTH = 16


@dataclass(eq=False)
class FrameStream:
    """A stack of u16 frames recorded at a fixed rate."""

    frames: np.ndarray
    fps: float

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames)
        require(frames.ndim == 3, f"frames must be (n, h, w), got shape {frames.shape}")
        require(frames.shape[0] >= 1, "a stream needs at least one frame")
        require(frames.dtype == np.uint16, f"frames must be uint16, got {frames.dtype}")
        fps = float(np.float32(self.fps))
        require(math.isfinite(fps) and fps > 0, f"fps must be > 0, got {self.fps}")
        self.frames = frames
        # stored at the precision CVS1 keeps
        self.fps = fps

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps


@dataclass(frozen=True)
class GateSpec:
    """A time gate of ``gate_frames`` frames advancing by ``stride_frames``."""

    gate_frames: int
    stride_frames: Optional[int] = None

    @property
    def stride(self) -> int:
        return self.gate_frames if self.stride_frames is None else self.stride_frames

    def validate(self, n_frames: int) -> "GateSpec":
        require(
            1 <= self.gate_frames <= n_frames,
            f"gate of {self.gate_frames} frames must lie in 1..{n_frames}",
        )
        require(self.stride >= 1, f"stride must be >= 1, got {self.stride}")
        return self


def gate_duration(gate_frames: int, fps: float) -> float:
    """Gate length in seconds, rounded to centiseconds."""
    return round(gate_frames / fps, 2)


def stream_to_bytes(stream: FrameStream) -> bytes:
    header = HEADER.pack(stream.width, stream.height, stream.n_frames, stream.fps, BIT_DEPTH)
    return MAGIC + header + np.ascontiguousarray(stream.frames, dtype="<u2").tobytes()


def stream_from_bytes(data: bytes) -> FrameStream:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0, record="magic")
    if len(data) < 4 + HEADER.size:
        raise FormatError(
            f"truncated header: need {4 + HEADER.size} bytes, have {len(data)}",
            offset=len(data),
            record="header",
        )
    width, height, n_frames, fps, depth = HEADER.unpack_from(data, 4)
    offset = 4 + HEADER.size
    if depth != BIT_DEPTH:
        raise FormatError(f"unsupported bit depth {depth}", offset=16, record="header")
    if width < 1 or height < 1 or n_frames < 1:
        raise FormatError(f"invalid dimensions {n_frames}x{height}x{width}", offset=4, record="header")
    if not (math.isfinite(fps) and fps > 0):
        raise FormatError(f"invalid fps {fps}", offset=16, record="header")

    frame_bytes = 2 * width * height
    available = (len(data) - offset) // frame_bytes
    if available < n_frames:
        raise FormatError(
            f"declared {n_frames} frames but payload holds {available}",
            offset=offset + available * frame_bytes,
            record=f"frame{available}",
        )
    end = offset + n_frames * frame_bytes
    if end != len(data):
        raise FormatError(f"{len(data) - end} trailing bytes", offset=end)
    frames = np.frombuffer(data, dtype="<u2", count=n_frames * width * height, offset=offset)
    return FrameStream(frames=frames.reshape(n_frames, height, width).astype(np.uint16), fps=fps)


def write_stream(stream: FrameStream, path: Union[str, Path]) -> Path:
    """Write ``stream`` as CVS1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(stream_to_bytes(stream))
    logger.debug("wrote %d frames to %s", stream.n_frames, path)
    return path


def read_stream(path: Union[str, Path]) -> FrameStream:
    """
    Read a CVS1 file.

    Raises:
        FormatError: bad magic, bad header, truncated payload, trailing bytes
    """
    return stream_from_bytes(Path(path).read_bytes())
