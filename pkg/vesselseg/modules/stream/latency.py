"""
Per-patch inference latency.
"""

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from ...errors import require
from ..nn import Mode
from ..segresnet import Model

logger = logging.getLogger("vesselseg.stream")

# published GPU figure for the full-size network; a reference, not a target
GPU_REFERENCE_MS = 0.7
STREAM_FPS = 19.6


@dataclass
class LatencyStats:
    """Wall-clock seconds per single-patch forward pass."""

    samples: List[float]
    patch_size: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def p50(self) -> float:
        return float(np.percentile(self.samples, 50))

    @property
    def p99(self) -> float:
        return float(np.percentile(self.samples, 99))

    @property
    def patches_per_second(self) -> float:
        return 1.0 / self.mean if self.mean > 0 else float("inf")

    @property
    def sustains_stream_rate(self) -> bool:
        return self.patches_per_second >= STREAM_FPS

    def to_dict(self) -> Dict[str, float]:
        return {
            "patch_size": self.patch_size,
            "trials": len(self.samples),
            "mean_s": self.mean,
            "p50_s": self.p50,
            "p99_s": self.p99,
            "patches_per_second": self.patches_per_second,
        }


def measure_latency(model: Model, n_warmup: int = 5, n_trials: int = 50, seed: int = 0) -> LatencyStats:
    """Time infer-mode forward passes on one random patch; warmup runs are discarded."""
    require(n_trials >= 10, f"n_trials must be >= 10, got {n_trials}")
    require(n_warmup >= 0, f"n_warmup must be >= 0, got {n_warmup}")
    p = model.config.patch_size
    x = np.random.default_rng(seed).random((1, model.config.in_channels, p, p)).astype(model.dtype)
    for _ in range(n_warmup):
        model.forward(x, Mode.INFER)
    samples = []
    for _ in range(n_trials):
        start = time.perf_counter()
        model.forward(x, Mode.INFER)
        samples.append(time.perf_counter() - start)
    stats = LatencyStats(samples=samples, patch_size=p)
    logger.info(
        "latency over %d trials: mean %.3f ms, p50 %.3f ms, p99 %.3f ms (%.1f patches/s)",
        n_trials, 1e3 * stats.mean, 1e3 * stats.p50, 1e3 * stats.p99, stats.patches_per_second,
    )
    return stats


def write_latency_csv(stats: LatencyStats, path: Union[str, Path]) -> Path:
    """``trial,seconds`` rows under a ``#`` header with the summary."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# patch_size={stats.patch_size} trials={len(stats.samples)}\n")
        f.write(
            f"# mean_s={stats.mean:.6g} p50_s={stats.p50:.6g} p99_s={stats.p99:.6g} "
            f"patches_per_second={stats.patches_per_second:.4g} stream_fps={STREAM_FPS}\n"
        )
        f.write(
            f"# gpu_reference_ms={GPU_REFERENCE_MS} (published GPU figure for the full network, "
            "not a target for this run)\n"
        )
        writer = csv.writer(f)
        writer.writerow(["trial", "seconds"])
        for i, s in enumerate(stats.samples):
            writer.writerow([i, f"{s:.9f}"])
    return path
