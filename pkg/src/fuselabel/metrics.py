"""Segmentation evaluation: vocabulary remapping, confusion accumulation,
mIoU and mIoU over the small-object subset.

Void handling: ground-truth void pixels are excluded from accumulation;
predicted void counts as a miss for the ground-truth class. Classes with
an empty union are dropped from the mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, UndefinedMetricError
from .ingest import Vocabulary

VOID = 0


def map_vocabulary(
    labels: np.ndarray, source_vocab: Vocabulary, mapping: dict[str, int]
) -> np.ndarray:
    """Remap a raster from a source vocabulary through a synonym map.

    ``mapping`` takes source class names to target ids; source classes
    without an entry become void.
    """
    labels = np.asarray(labels)
    lut = np.zeros(max(int(labels.max(initial=0)), source_vocab.max_id) + 1, dtype=labels.dtype)
    for cid, name in source_vocab.names.items():
        lut[cid] = mapping.get(name, VOID)
    return lut[labels]


@dataclass
class ConfusionMatrix:
    """gt-by-pred pixel counts; row 0 (gt void) stays empty by design."""

    matrix: np.ndarray  # (C, C) int64

    @classmethod
    def zeros(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    def add(self, pred: np.ndarray, gt: np.ndarray):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise DimensionMismatchError("pred", gt.shape, pred.shape)
        valid = gt != VOID
        p = pred[valid].astype(np.int64)
        g = gt[valid].astype(np.int64)
        c = self.n_classes
        if p.size and (p.max() >= c or g.max() >= c):
            raise ValueError("class id exceeds confusion matrix size")
        self.matrix += np.bincount(g * c + p, minlength=c * c).reshape(c, c)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.matrix + other.matrix)

    def per_class_iou(self) -> dict[int, float]:
        """IoU for every non-void class with a nonzero union."""
        tp = np.diag(self.matrix).astype(np.float64)
        fn = self.matrix.sum(axis=1) - tp
        fp = self.matrix.sum(axis=0) - tp
        union = tp + fp + fn
        out = {}
        for c in range(1, self.n_classes):
            if union[c] > 0:
                out[c] = float(tp[c] / union[c])
        return out


def accumulate_confusion(
    pred: np.ndarray, gt: np.ndarray, cm: ConfusionMatrix
) -> ConfusionMatrix:
    """Add one frame's pixels into ``cm`` (mutates and returns it)."""
    cm.add(pred, gt)
    return cm


def miou(cm: ConfusionMatrix, subset=None) -> float:
    """Mean IoU over all scored classes, or over ``subset`` of class ids."""
    ious = cm.per_class_iou()
    if subset is not None:
        ious = {c: v for c, v in ious.items() if c in subset}
    if not ious:
        raise UndefinedMetricError("no class has a nonzero union")
    return float(np.mean(list(ious.values())))


def evaluation_report(cm: ConfusionMatrix, vocab: Vocabulary) -> dict:
    """JSON-ready report: per-class IoU, mIoU, mIoU-small, pixel counts."""
    ious = cm.per_class_iou()
    small = {c: v for c, v in ious.items() if c in vocab.small_objects}
    report = {
        "per_class_iou": {
            vocab.names.get(c, str(c)): round(v, 6) for c, v in sorted(ious.items())
        },
        "miou": round(float(np.mean(list(ious.values()))), 6) if ious else None,
        "miou_small": round(float(np.mean(list(small.values()))), 6) if small else None,
        "scored_pixels": int(cm.matrix.sum()),
        "scored_classes": len(ious),
    }
    return report


def format_report_text(report: dict) -> str:
    lines = [f"{'class':<24}{'IoU':>8}", "-" * 32]
    for name, v in report["per_class_iou"].items():
        lines.append(f"{name:<24}{v:>8.4f}")
    lines.append("-" * 32)
    miou_v = report["miou"]
    lines.append(f"{'mIoU':<24}{miou_v:>8.4f}" if miou_v is not None else "mIoU        n/a")
    if report["miou_small"] is not None:
        lines.append(f"{'mIoU-small':<24}{report['miou_small']:>8.4f}")
    lines.append(f"scored pixels: {report['scored_pixels']}")
    return "\n".join(lines) + "\n"
