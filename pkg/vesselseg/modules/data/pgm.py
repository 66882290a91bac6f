"""
Binary PNM I/O: P5 grayscale (8 or 16 bit) and P6 colour (8 bit).

16-bit samples are big-endian as the PNM convention requires. ASCII
variants (P1-P3) and bitmaps (P4) are rejected.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ...errors import FormatError, require

logger = logging.getLogger("vesselseg.data")

_WHITESPACE = b" \t\r\n\x0b\x0c"
_CHANNELS = {b"P5": 1, b"P6": 3}


@dataclass
class PnmImage:
    """Decoded PNM payload: raw integer samples plus the declared maxval."""

    pixels: np.ndarray
    maxval: int

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    def to_unit(self) -> np.ndarray:
        """Samples scaled to [0, 1] as float32."""
        return (self.pixels.astype(np.float64) / self.maxval).astype(np.float32)


def _parse_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    magic = data[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4"):
        raise FormatError(f"unsupported PNM variant {magic.decode()} (only binary P5/P6)", offset=0)
    if magic not in _CHANNELS:
        raise FormatError(f"bad magic {magic!r}, expected P5 or P6", offset=0)

    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        while pos < len(data):
            if data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            elif data[pos] in _WHITESPACE:
                pos += 1
            else:
                break
        if pos == start:
            raise FormatError(f"expected whitespace before {name}", offset=pos)
        digits_start = pos
        while pos < len(data) and 48 <= data[pos] <= 57:
            pos += 1
        if pos == digits_start:
            raise FormatError(f"expected decimal {name}", offset=pos)
        fields.append(int(data[digits_start:pos]))

    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("expected single whitespace after maxval", offset=pos)
    pos += 1

    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}", offset=2)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535", offset=pos - 1)
    return magic, width, height, maxval, pos


def decode_pnm(data: bytes) -> PnmImage:
    """Decode a binary P5/P6 payload."""
    magic, width, height, maxval, offset = _parse_header(data)
    channels = _CHANNELS[magic]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    available = len(data) - offset
    if available < expected:
        raise FormatError(
            f"truncated payload: need {expected} bytes, {available} present", offset=len(data)
        )
    if available > expected:
        logger.warning("ignoring %d trailing bytes after PNM payload", available - expected)

    samples = np.frombuffer(data, dtype=dtype, count=width * height * channels, offset=offset)
    shape = (height, width) if channels == 1 else (height, width, channels)
    pixels = samples.reshape(shape).astype(np.uint16 if maxval > 255 else np.uint8)
    if int(pixels.max(initial=0)) > maxval:
        raise FormatError(f"sample exceeds maxval {maxval}", offset=offset)
    return PnmImage(pixels=pixels, maxval=maxval)


def encode_pnm(pixels: np.ndarray, maxval: Union[int, None] = None) -> bytes:
    """Encode an integer array as P5 (h, w) or P6 (h, w, 3)."""
    pixels = np.asarray(pixels)
    require(pixels.dtype.kind in "ui", f"PNM samples must be integers, got {pixels.dtype}")
    require(
        pixels.ndim == 2 or (pixels.ndim == 3 and pixels.shape[2] == 3),
        f"PNM image must be (h, w) or (h, w, 3), got {pixels.shape}",
    )
    if maxval is None:
        maxval = 255 if pixels.dtype.itemsize == 1 else 65535
    require(1 <= maxval <= 65535, f"maxval {maxval} outside 1..65535")
    require(
        pixels.size == 0 or (int(pixels.min()) >= 0 and int(pixels.max()) <= maxval),
        f"samples must lie in 0..{maxval}",
    )
    magic = b"P5" if pixels.ndim == 2 else b"P6"
    height, width = pixels.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(pixels, dtype=dtype).tobytes()


def read_pnm(path: Union[str, Path]) -> PnmImage:
    return decode_pnm(Path(path).read_bytes())


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read a P5 file and return its raw samples (uint8 or uint16)."""
    image = read_pnm(path)
    if image.channels != 1:
        raise FormatError(f"{path} is a colour PPM, expected grayscale P5", offset=0)
    return image.pixels


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit P6 file as an (h, w, 3) uint8 array."""
    image = read_pnm(path)
    if image.channels != 3:
        raise FormatError(f"{path} is grayscale, expected colour P6", offset=0)
    if image.maxval > 255:
        raise FormatError("16-bit PPM is not supported", offset=0)
    return image.pixels


def write_pgm(image: np.ndarray, path: Union[str, Path], maxval: Union[int, None] = None) -> Path:
    """
    Write an integer grayscale image as P5.

    uint8 input defaults to maxval 255, wider types to 65535.
    """
    image = np.asarray(image)
    require(image.ndim == 2, f"write_pgm expects a 2-D image, got shape {image.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pnm(image, maxval))
    return path


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pnm(np.asarray(image, dtype=np.uint8)))
    return path


def quantize_unit(image: np.ndarray, bits: int = 16) -> np.ndarray:
    """Map a [0, 1] float image to unsigned integers of the given depth."""
    require(bits in (8, 16), f"bit depth must be 8 or 16, got {bits}")
    top = 255 if bits == 8 else 65535
    scaled = np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * top)
    return scaled.astype(np.uint8 if bits == 8 else np.uint16)
