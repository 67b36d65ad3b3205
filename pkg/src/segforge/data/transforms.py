"""Padding with sea-surface patches, normalization, and flip augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .samples import SegmentationSample

STD_FLOOR = 1e-6
SEA_SURFACE = 0


@dataclass
class PatchSpec:
    """Where the sea-surface padding patch comes from: a rectangle of a
    named sample. Explicit configuration stands in for the paper's
    hand-picked patch image."""

    image_id: str = ""
    x: int = 0
    y: int = 0
    w: int = 64
    h: int = 64

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d) -> "PatchSpec":
        return cls(**d)


def extract_patch(samples, spec: PatchSpec) -> np.ndarray:
    """Cut the configured region out of the named sample (first sample when
    the id is empty); clips the rectangle to the image."""
    if not samples:
        raise DataError("cannot extract a padding patch from an empty dataset")
    if spec.image_id:
        matches = [s for s in samples if s.id == spec.image_id]
        if not matches:
            raise DataError(f"patch source image {spec.image_id!r} not in dataset")
        source = matches[0]
    else:
        source = samples[0]
    h, w = source.hw
    x0 = min(max(spec.x, 0), max(w - 1, 0))
    y0 = min(max(spec.y, 0), max(h - 1, 0))
    x1 = min(x0 + spec.w, w)
    y1 = min(y0 + spec.h, h)
    patch = source.image[y0:y1, x0:x1]
    if patch.size == 0:
        raise DataError(f"patch region {spec} is empty for image {source.id!r}")
    return np.ascontiguousarray(patch)


def pad_to_target(sample: SegmentationSample, target_hw, patch: np.ndarray) -> SegmentationSample:
    """Center the sample on a target-sized canvas tiled from the sea patch.

    Left/top pads take the floor of the difference, right/bottom the rest.
    Interior pixels are bit-identical to the source; the padded mask border
    is labeled sea surface.
    """
    th, tw = target_hw
    h, w = sample.hw
    if th < h or tw < w:
        raise DataError(
            f"sample {sample.id}: target {th}x{tw} smaller than source {h}x{w}"
        )
    if (th, tw) == (h, w):
        return sample.copy_with(pad_offset=(0, 0))
    if patch.ndim != 3 or patch.shape[2] != sample.image.shape[2]:
        raise DataError(
            f"patch channels {patch.shape} incompatible with image {sample.image.shape}"
        )
    top = (th - h) // 2
    left = (tw - w) // 2

    reps_y = -(-th // patch.shape[0])
    reps_x = -(-tw // patch.shape[1])
    canvas = np.tile(patch, (reps_y, reps_x, 1))[:th, :tw].astype(sample.image.dtype)
    canvas[top : top + h, left : left + w] = sample.image

    mask = np.full((th, tw), SEA_SURFACE, dtype=sample.mask.dtype)
    mask[top : top + h, left : left + w] = sample.mask

    return sample.copy_with(
        image=np.ascontiguousarray(canvas),
        mask=mask,
        pad_offset=(top, left),
    )


def crop_to_original(array: np.ndarray, sample: SegmentationSample) -> np.ndarray:
    """Undo pad_to_target on an (H, W, ...) array aligned with the sample."""
    top, left = sample.pad_offset
    h, w = sample.original_hw
    return array[top : top + h, left : left + w]


@dataclass
class NormalizationStats:
    mean: np.ndarray  # per channel
    std: np.ndarray   # per channel, floored away from zero

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d) -> "NormalizationStats":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64))


def compute_normalization_stats(samples) -> NormalizationStats:
    """Per-channel mean and population std over every pixel of the samples."""
    if not samples:
        raise DataError("normalization stats over an empty sample list")
    channels = samples[0].image.shape[2]
    total = np.zeros(channels, dtype=np.float64)
    total_sq = np.zeros(channels, dtype=np.float64)
    count = 0
    for s in samples:
        if s.image.shape[2] != channels:
            raise DataError("samples disagree on channel count")
        img = s.image.astype(np.float64)
        total += img.sum(axis=(0, 1))
        total_sq += (img * img).sum(axis=(0, 1))
        count += img.shape[0] * img.shape[1]
    if count == 0:
        raise DataError("zero-pixel dataset")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return NormalizationStats(mean=mean, std=std)


def normalize(image: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    mean = stats.mean.astype(image.dtype)
    std = stats.std.astype(image.dtype)
    return (image - mean) / std


def denormalize(image: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    mean = stats.mean.astype(image.dtype)
    std = stats.std.astype(image.dtype)
    return image * std + mean


def augment_flips(sample: SegmentationSample, p_h: float, p_v: float,
                  rng: np.random.Generator) -> SegmentationSample:
    """Flip image and mask together, each axis by its own coin."""
    if not (0.0 <= p_h <= 1.0 and 0.0 <= p_v <= 1.0):
        raise DataError(f"flip probabilities must lie in [0, 1], got {p_h}, {p_v}")
    do_h = rng.random() < p_h
    do_v = rng.random() < p_v
    if not (do_h or do_v):
        return sample
    image, mask = sample.image, sample.mask
    if do_h:
        image = image[:, ::-1]
        mask = mask[:, ::-1]
    if do_v:
        image = image[::-1]
        mask = mask[::-1]
    return sample.copy_with(image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask))


def to_model_input(image: np.ndarray) -> np.ndarray:
    """(H, W, C) intensity image -> (3, H, W), replicating grayscale."""
    if image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    elif image.shape[2] != 3:
        raise DataError(f"expected 1 or 3 channels, got {image.shape[2]}")
    return np.ascontiguousarray(image.transpose(2, 0, 1))
