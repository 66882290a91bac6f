"""
SRW1 weight files.

Layout (little-endian):
    "SRW1" | u32 config length | config key=value lines (UTF-8) | u32 record count |
    per record: u16 name length | name (UTF-8) | u8 rank | rank x u32 dims | f32 values
Running batch-norm statistics are stored as `<layer>.running_mean` / `<layer>.running_var`.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ...errors import FormatError
from .model import Model, ModelConfig, build_model

logger = logging.getLogger("vesselseg.segresnet")

MAGIC = b"SRW1"


def weights_to_bytes(model: Model) -> bytes:
    """Serialize parameters, running buffers and config."""
    config_block = model.config.to_text().encode("utf-8")
    records = list(model.state_dict().items())

    buf = bytearray(MAGIC)
    buf += struct.pack("<I", len(config_block))
    buf += config_block
    buf += struct.pack("<I", len(records))
    for name, arr in records:
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str, record: Union[str, None] = None) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left",
                offset=self.pos,
                record=record,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str, record: Union[str, None] = None) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what, record))


def weights_from_bytes(data: bytes) -> Model:
    """Parse an SRW1 payload into a model."""
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, record="magic")

    (config_len,) = reader.unpack("<I", "config length", "config")
    config_offset = reader.pos
    try:
        config = ModelConfig.from_text(reader.take(config_len, "config block", "config").decode("utf-8"))
        model = build_model(config, seed=0)
    except FormatError:
        raise
    except (ValueError, KeyError, UnicodeDecodeError) as e:
        raise FormatError(f"invalid config block: {e}", offset=config_offset, record="config") from e

    expected = model.state_dict()
    (count,) = reader.unpack("<I", "record count", "header")
    loaded = {}
    for _ in range(count):
        record_offset = reader.pos
        (name_len,) = reader.unpack("<H", "record name length")
        try:
            name = reader.take(name_len, "record name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("record name is not UTF-8", offset=record_offset) from e
        (rank,) = reader.unpack("<B", "record rank", name)
        shape = reader.unpack(f"<{rank}I", "record dims", name) if rank else ()
        if name not in expected:
            raise FormatError("unknown record for this config", offset=record_offset, record=name)
        if name in loaded:
            raise FormatError("duplicate record", offset=record_offset, record=name)
        if tuple(shape) != expected[name].shape:
            raise FormatError(
                f"shape mismatch with config: file {tuple(shape)}, config {expected[name].shape}",
                offset=record_offset,
                record=name,
            )
        n_values = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(4 * n_values, "record values", name)
        loaded[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)

    missing = [name for name in expected if name not in loaded]
    if missing:
        raise FormatError(f"missing {len(missing)} records", offset=reader.pos, record=missing[0])
    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes", offset=reader.pos)

    model.load_state_dict(loaded)
    return model


def save_weights(model: Model, path: Union[str, Path]) -> Path:
    """Write ``model`` to ``path`` in SRW1 format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(weights_to_bytes(model))
    logger.debug("saved weights to %s", path)
    return path


def load_weights(path: Union[str, Path], config: Union[ModelConfig, None] = None) -> Model:
    """
    Read an SRW1 file.

    Args:
        path: weight file
        config: when given, the file's config must equal it

    Raises:
        FormatError: bad magic, truncated record, shape or config mismatch
    """
    path = Path(path)
    model = weights_from_bytes(path.read_bytes())
    if config is not None and model.config != config:
        raise FormatError(
            f"config mismatch: file has {model.config}, expected {config}", record="config"
        )
    return model
