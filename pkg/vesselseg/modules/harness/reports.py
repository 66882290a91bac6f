"""
Experiment reports: case rows, summary rows and a config echo, written as CSV.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np


def mean_std(values: Sequence[float]) -> Dict[str, float]:
    """Mean and population standard deviation; NaN for an empty sequence."""
    if len(values) == 0:
        return {"mean": float("nan"), "std": float("nan"), "n": 0}
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": len(values)}


def standard_error(values: Sequence[float]) -> float:
    """Sample standard deviation over sqrt(n); 0 for a single value."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass
class ExperimentReport:
    """Everything one experiment run produced; a pure function of inputs and seed."""

    experiment: str
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: List[Dict[str, Any]] = field(default_factory=list)

    def add_row(self, **values: Any) -> None:
        self.rows.append(values)

    def add_summary(self, **values: Any) -> None:
        self.summary.append(values)

    def find_summary(self, **match: Any) -> Dict[str, Any]:
        """First summary row whose fields equal ``match``."""
        for s in self.summary:
            if all(s.get(k) == v for k, v in match.items()):
                return s
        raise KeyError(f"no summary row matching {match}")

    def columns(self) -> List[str]:
        cols: List[str] = ["kind"]
        for r in self.rows + self.summary:
            for key in r:
                if key not in cols:
                    cols.append(key)
        return cols

    def header_lines(self) -> List[str]:
        lines = [f"experiment={self.experiment}", f"seed={self.seed}"]
        lines.extend(f"{k}={_format(v)}" for k, v in self.config.items())
        return lines

    def write_csv(self, path: Union[str, Path]) -> Path:
        """``#`` config header, then case rows and summary rows under one column set."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = self.columns()
        with path.open("w", newline="", encoding="utf-8") as f:
            for line in self.header_lines():
                f.write(f"# {line}\n")
            writer = csv.writer(f)
            writer.writerow(cols)
            for kind, table in (("case", self.rows), ("summary", self.summary)):
                for r in table:
                    writer.writerow([kind if c == "kind" else _format(r.get(c, "")) for c in cols])
        return path
