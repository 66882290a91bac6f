"""
Per-record segmentation metrics.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Union

import numpy as np

from ..data import PatchRecord
from ..metrics import BinaryMask, boundary_iou, dice_score, iou_score
from ..segresnet import Model
from ..stream import tiled_infer

Predictor = Callable[[np.ndarray], BinaryMask]

METRIC_NAMES = ("dice", "iou", "boundary_iou")


def model_predictor(model: Model, theta: float = 0.5, max_workers: int = 1) -> Predictor:
    """Image -> mask via non-overlapping tiled inference."""

    def predict(image: np.ndarray) -> BinaryMask:
        return tiled_infer(model, image, theta=theta, max_workers=max_workers)

    return predict


def as_predictor(model_or_predictor: Union[Model, Predictor]) -> Predictor:
    if isinstance(model_or_predictor, Model):
        return model_predictor(model_or_predictor)
    return model_or_predictor


@dataclass
class MetricsReport:
    """Per-record scores with mean and population standard deviation."""

    rows: List[Dict[str, object]] = field(default_factory=list)

    def values(self, metric: str) -> np.ndarray:
        return np.asarray([r[metric] for r in self.rows], dtype=np.float64)

    def mean(self, metric: str = "dice") -> float:
        return float(np.mean(self.values(metric))) if self.rows else float("nan")

    def std(self, metric: str = "dice") -> float:
        return float(np.std(self.values(metric))) if self.rows else float("nan")

    def summary(self) -> Dict[str, float]:
        out: Dict[str, float] = {"n": len(self.rows)}
        for m in METRIC_NAMES:
            out[f"{m}_mean"] = self.mean(m)
            out[f"{m}_std"] = self.std(m)
        return out

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One row per record plus a summary row holding mean and std."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        summary = self.summary()
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["kind", "source_id", "grid_row", "grid_col", *METRIC_NAMES, *(f"{m}_std" for m in METRIC_NAMES)])
            for r in self.rows:
                writer.writerow(
                    ["record", r["source_id"], r["grid_row"], r["grid_col"],
                     *(f"{r[m]:.6f}" for m in METRIC_NAMES), *([""] * len(METRIC_NAMES))]
                )
            writer.writerow(
                ["summary", f"n={summary['n']}", "", "",
                 *(f"{summary[m + '_mean']:.6f}" for m in METRIC_NAMES),
                 *(f"{summary[m + '_std']:.6f}" for m in METRIC_NAMES)]
            )
        return path


def evaluate_dataset(
    model_or_predictor: Union[Model, Predictor], records: Sequence[PatchRecord]
) -> MetricsReport:
    """Score the binarized prediction of every record against its mask."""
    predict = as_predictor(model_or_predictor)
    report = MetricsReport()
    for r in records:
        pred = predict(r.image)
        row, col = r.grid_pos
        report.rows.append(
            {
                "source_id": r.source_id,
                "grid_row": row,
                "grid_col": col,
                "dice": dice_score(pred, r.mask),
                "iou": iou_score(pred, r.mask),
                "boundary_iou": boundary_iou(pred, r.mask),
            }
        )
    return report
