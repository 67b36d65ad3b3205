"""Dataset-level evaluation and k-fold cross-validation."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..data.samples import ordered_parallel_map
from ..data.scheme import ClassScheme
from ..data.splits import kfold
from ..data.transforms import (
    NormalizationStats,
    crop_to_original,
    normalize,
    pad_to_target,
    to_model_input,
)
from ..errors import DataError
from ..models import build_segmentation_model
from ..tensor import Tensor, no_grad
from .metrics import ConfusionMatrix, IouReport, build_report, format_fold_summary


def predict_mask(model, sample, stats: NormalizationStats) -> np.ndarray:
    """Argmax class mask for one padded sample (ties go to the lowest index)."""
    image = to_model_input(normalize(sample.image, stats))
    with no_grad():
        logits = model(Tensor(image[None]))
    return np.argmax(logits.data[0], axis=0).astype(np.uint8)


def evaluate_model(model, samples, stats: NormalizationStats, scheme: ClassScheme,
                   pad_hw=None, patch=None, threads: int = 1,
                   crop_back: bool = False, masks_dir=None) -> IouReport:
    """Accumulate one dataset-level confusion matrix in eval mode.

    Metrics are computed over the full padded masks by default (padding is
    sea surface on both sides); crop_back restricts them to the original
    image region instead. Per-image matrices merge by integer sums, so the
    thread count never changes the result.
    """
    if not samples:
        raise DataError("evaluation on an empty dataset")
    if stats is None:
        raise DataError("normalization stats missing")
    if model.config.num_classes != scheme.num_classes:
        raise DataError(
            f"model predicts {model.config.num_classes} classes but the class "
            f"scheme defines {scheme.num_classes}"
        )
    model.eval()
    masks_path = None
    if masks_dir is not None:
        masks_path = Path(masks_dir)
        masks_path.mkdir(parents=True, exist_ok=True)

    def run_one(sample):
        padded = sample
        if pad_hw is not None and tuple(pad_hw) != sample.hw:
            if patch is None:
                raise DataError("padding requested but no sea-surface patch provided")
            padded = pad_to_target(sample, tuple(pad_hw), patch)
        predicted = predict_mask(model, padded, stats)
        target = padded.mask
        if crop_back:
            predicted = crop_to_original(predicted, padded)
            target = crop_to_original(target, padded)
        cm = ConfusionMatrix(scheme.num_classes).update(predicted, target)
        if masks_path is not None:
            rgb = scheme.encode_mask(predicted)
            Image.fromarray(rgb, mode="RGB").save(masks_path / f"{sample.id}.png")
        return cm

    matrices = ordered_parallel_map(run_one, samples, threads=threads)
    total = ConfusionMatrix(scheme.num_classes)
    for cm in matrices:
        total.merge(cm)
    return build_report(total, scheme.names, num_images=len(samples))


def cross_validate(samples, model_config, train_config, scheme: ClassScheme,
                   k: int = 5, fit_fn=None):
    """Train on k-1 folds, evaluate on the held-out fold, k times.

    Samples must already share one size (pad first). Returns (per-fold m-IoU
    percentages, 'mean ± std' summary string). Normalization stats are
    recomputed per fold from that fold's training split only.
    """
    from ..data.transforms import compute_normalization_stats
    from ..training.loop import fit as default_fit

    fit_fn = fit_fn or default_fit
    plan = kfold([s.id for s in samples], k=k, seed=train_config.seed)
    by_id = {s.id: s for s in samples}
    fold_mious = []
    for fold in range(k):
        held_ids = set(plan.fold_ids(fold))
        train_split = [by_id[i] for i in plan.train_ids if i not in held_ids]
        held_split = [by_id[i] for i in plan.train_ids if i in held_ids]
        stats = compute_normalization_stats(train_split)
        model = build_segmentation_model(model_config)
        try:
            fit_fn(model, train_split, held_split, train_config, stats)
        except Exception as exc:
            raise DataError(f"training failed on fold {fold}: {exc}") from exc
        report = evaluate_model(model, held_split, stats, scheme)
        fold_mious.append(report.miou_percent)
    return fold_mious, format_fold_summary(fold_mious)
