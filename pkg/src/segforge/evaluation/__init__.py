from .metrics import (
    ConfusionMatrix,
    IouReport,
    build_report,
    class_iou,
    format_fold_summary,
    mean_iou,
    per_class_iou,
)
from .reports import emit_cross_validation, emit_learning_curves, emit_report
from .runner import cross_validate, evaluate_model, predict_mask

__all__ = [
    "ConfusionMatrix",
    "IouReport",
    "build_report",
    "class_iou",
    "cross_validate",
    "emit_cross_validation",
    "emit_learning_curves",
    "emit_report",
    "evaluate_model",
    "format_fold_summary",
    "mean_iou",
    "per_class_iou",
    "predict_mask",
]
