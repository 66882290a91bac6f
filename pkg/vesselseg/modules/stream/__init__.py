"""
Stream Module - Black Box Interface

Purpose: Real-time path from frame streams to stitched vessel masks
Interface: FrameStream, GateSpec, read_stream(), write_stream(), accumulate(),
           subcumulative_windows(), roi_crop_multiple(), tiled_predict(), tiled_infer(),
           measure_latency()
Hidden: CVS1 byte layout, tile scheduling, timing loop
"""

from .accumulate import Window, accumulate, accumulate_counts, subcumulative_windows
from .latency import GPU_REFERENCE_MS, STREAM_FPS, LatencyStats, measure_latency, write_latency_csv
from .stream import (
    MAGIC,
    FrameStream,
    GateSpec,
    gate_duration,
    read_stream,
    stream_from_bytes,
    stream_to_bytes,
    write_stream,
)
from .tiling import MAX_ROI_PATCHES, roi_crop_multiple, tiled_infer, tiled_predict

__all__ = [
    "GPU_REFERENCE_MS",
    "MAGIC",
    "MAX_ROI_PATCHES",
    "STREAM_FPS",
    "FrameStream",
    "GateSpec",
    "LatencyStats",
    "Window",
    "accumulate",
    "accumulate_counts",
    "gate_duration",
    "measure_latency",
    "read_stream",
    "roi_crop_multiple",
    "stream_from_bytes",
    "stream_to_bytes",
    "subcumulative_windows",
    "tiled_infer",
    "tiled_predict",
    "write_latency_csv",
    "write_stream",
]
