"""Mask IoU, prec@X and dataset-level reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from cmsanet.errors import DimensionError, ParseError

PREC_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


def _counts(pred, gt) -> tuple[int, int]:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise DimensionError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return int(np.count_nonzero(pred & gt)), int(np.count_nonzero(pred | gt))


def iou(pred, gt) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    inter, union = _counts(pred, gt)
    return 1.0 if union == 0 else inter / union


def prec_at(ious, x: float) -> float:
    """Fraction of IoUs strictly above ``x``."""
    ious = np.asarray(ious, dtype=np.float64)
    return float(np.count_nonzero(ious > x)) / ious.size if ious.size else 0.0


@dataclass
class MetricsReport:
    ids: list[int]
    ious: list[float]
    overall_iou: float  # cumulative intersection / cumulative union
    mean_iou: float
    prec: dict[float, float] = field(default_factory=dict)

    def summary(self) -> dict[str, float]:
        out = {"overall_iou": self.overall_iou, "mean_iou": self.mean_iou}
        out.update({f"prec@{x}": v for x, v in self.prec.items()})
        return out


def report_from(ids, ious, inter_total: int, union_total: int) -> MetricsReport:
    return MetricsReport(
        ids=list(ids),
        ious=list(ious),
        overall_iou=1.0 if union_total == 0 else inter_total / union_total,
        mean_iou=float(np.mean(ious)) if ious else 0.0,
        prec={x: prec_at(ious, x) for x in PREC_THRESHOLDS},
    )


def evaluate(predict: Callable, samples, threshold: float = 0.5) -> MetricsReport:
    """Threshold ``predict(sample)`` probabilities at ``threshold`` and score each sample."""
    ids, ious = [], []
    inter_total = union_total = 0
    for s in samples:
        P = np.asarray(predict(s))
        pred = P > threshold
        inter, union = _counts(pred, s.mask)
        inter_total += inter
        union_total += union
        ids.append(s.id)
        ious.append(1.0 if union == 0 else inter / union)
    return report_from(ids, ious, inter_total, union_total)


def write_metrics_csv(path, report: MetricsReport) -> None:
    """``id,iou`` rows followed by an ``overall,<cumulative IoU>`` summary row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "iou"])
        for i, v in zip(report.ids, report.ious):
            w.writerow([i, repr(float(v))])
        w.writerow(["overall", repr(float(report.overall_iou))])


def read_metrics_csv(path) -> tuple[list[int], list[float], float | None]:
    ids, ious, overall = [], [], None
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["id", "iou"]:
        raise ParseError("expected header 'id,iou'", path, 1)
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            if row[0] == "overall":
                overall = float(row[1])
            else:
                ids.append(int(row[0]))
                ious.append(float(row[1]))
        except (IndexError, ValueError):
            raise ParseError(f"bad row {row!r}", path, lineno) from None
    return ids, ious, overall


def write_summary(path, report: MetricsReport) -> None:
    s = report.summary()
    Path(path).write_text(",".join(s) + "\n" + ",".join(repr(float(v)) for v in s.values()) + "\n",
                          encoding="utf-8")


def read_summary(path) -> dict[str, float]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise ParseError("summary needs a header and a value line", path)
    keys, vals = lines[0].split(","), lines[1].split(",")
    return {k: float(v) for k, v in zip(keys, vals)}
