"""CSV/JSON report emission for IoU tables and learning curves."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..training.loop import write_epoch_log_csv
from .metrics import IouReport


def emit_report(report: IouReport, out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Write <stem>.csv and <stem>.json; the CSV lists per-class rows then
    the mean row."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("class,iou_percent\n")
        for name, iou in zip(report.class_names, report.class_iou_percent):
            value = "" if np.isnan(iou) else f"{iou:.3f}"
            fh.write(f"{name},{value}\n")
        fh.write(f"mean,{report.miou_percent:.3f}\n")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def emit_learning_curves(logs, path) -> Path:
    """Epoch-indexed CSV (epoch, train_loss, val_loss, val_miou, lr)."""
    if not logs:
        raise DataError("no epoch logs to emit")
    path = Path(path)
    write_epoch_log_csv(logs, path)
    return path


def emit_cross_validation(fold_mious, summary: str, out_dir, stem: str = "crossval") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("fold,miou_percent\n")
        for fold, miou in enumerate(fold_mious):
            fh.write(f"{fold},{miou:.3f}\n")
        fh.write(f"summary,{summary}\n")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"fold_miou_percent": [float(m) for m in fold_mious], "summary": summary},
            fh,
            indent=2,
        )
        fh.write("\n")
    return csv_path, json_path
