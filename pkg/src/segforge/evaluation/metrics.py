"""Confusion-matrix accumulation and IoU computation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


class ConfusionMatrix:
    """K x K integer counts; entry (g, p) = pixels of truth g predicted p."""

    def __init__(self, num_classes: int):
        if num_classes < 2:
            raise ShapeError(f"need at least two classes, got {num_classes}")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, predicted: np.ndarray, target: np.ndarray) -> "ConfusionMatrix":
        predicted = np.asarray(predicted)
        target = np.asarray(target)
        if predicted.shape != target.shape:
            raise ShapeError(
                f"prediction shape {predicted.shape} vs target {target.shape}"
            )
        k = self.num_classes
        for name, arr in (("predicted", predicted), ("target", target)):
            if arr.min(initial=0) < 0 or arr.max(initial=0) >= k:
                raise ShapeError(f"{name} mask contains values outside [0, {k})")
        flat = target.reshape(-1).astype(np.int64) * k + predicted.reshape(-1).astype(np.int64)
        self.counts += np.bincount(flat, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ShapeError("cannot merge confusion matrices of different sizes")
        self.counts += other.counts
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def class_iou(cm: ConfusionMatrix, k: int) -> float:
    """Intersection over union for class k; NaN when the class is absent
    from both ground truth and prediction."""
    counts = cm.counts
    inter = counts[k, k]
    union = counts[k, :].sum() + counts[:, k].sum() - inter
    if union == 0:
        return float("nan")
    return float(inter / union)


def per_class_iou(cm: ConfusionMatrix) -> list[float]:
    return [class_iou(cm, k) for k in range(cm.num_classes)]


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean over classes present in ground truth or prediction."""
    ious = [v for v in per_class_iou(cm) if not np.isnan(v)]
    if not ious:
        raise ShapeError("mean IoU undefined: every class absent")
    return float(np.mean(ious))


@dataclass
class IouReport:
    class_names: tuple
    class_iou_percent: list      # NaN for absent classes
    miou_percent: float
    num_images: int
    support: list                # ground-truth pixel count per class

    def to_dict(self) -> dict:
        return {
            "class_iou_percent": {
                name: (None if np.isnan(v) else float(v))
                for name, v in zip(self.class_names, self.class_iou_percent)
            },
            "miou_percent": float(self.miou_percent),
            "num_images": self.num_images,
            "support": {name: int(s) for name, s in zip(self.class_names, self.support)},
        }


def build_report(cm: ConfusionMatrix, class_names, num_images: int) -> IouReport:
    ious = per_class_iou(cm)
    return IouReport(
        class_names=tuple(class_names),
        class_iou_percent=[100.0 * v for v in ious],
        miou_percent=100.0 * mean_iou(cm),
        num_images=num_images,
        support=[int(s) for s in cm.counts.sum(axis=1)],
    )


def format_fold_summary(mious_percent) -> str:
    """Cross-validation summary in the published style, e.g. '67.345 ± 1.407'
    (population std over folds, three decimals)."""
    values = np.asarray(list(mious_percent), dtype=np.float64)
    return f"{values.mean():.3f} ± {values.std():.3f}"
