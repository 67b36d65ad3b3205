"""Samples, dataset loading, and class statistics.

Dataset layout: root/images/<id>.png and root/masks/<id>.png with matching
basenames. Images load as float32 intensities in [0, 1], grayscale kept
single-channel; masks decode from palette RGB to class indices.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError
from .scheme import ClassScheme


@dataclass
class SegmentationSample:
    image: np.ndarray  # (H, W, 1) or (H, W, 3) float32 intensities
    mask: np.ndarray   # (H, W) uint8 class indices
    id: str
    original_hw: tuple
    pad_offset: tuple = (0, 0)  # (top, left) of the original inside a padded canvas

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise DataError(
                f"sample {self.id}: image {self.image.shape[:2]} and "
                f"mask {self.mask.shape} dimensions differ"
            )

    @property
    def hw(self) -> tuple:
        return self.image.shape[:2]

    def copy_with(self, **kwargs) -> "SegmentationSample":
        return replace(self, **kwargs)


def ordered_parallel_map(fn, items, threads: int = 1):
    """Apply fn to items on a worker pool; results return in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def load_image(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
        return arr[:, :, None]
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def load_dataset(root, scheme: ClassScheme, threads: int = 1) -> list[SegmentationSample]:
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DataError(f"{root}: expected images/ and masks/ subdirectories")
    image_paths = sorted(images_dir.glob("*.png"))
    if not image_paths:
        raise DataError(f"{images_dir}: no PNG images found")

    def load_one(img_path: Path) -> SegmentationSample:
        sample_id = img_path.stem
        mask_path = masks_dir / img_path.name
        if not mask_path.exists():
            raise DataError(f"missing mask for image {img_path.name} (looked at {mask_path})")
        image = load_image(img_path)
        mask_rgb = np.asarray(Image.open(mask_path).convert("RGB"))
        mask = scheme.decode_mask(mask_rgb, source=str(mask_path))
        if image.shape[:2] != mask.shape:
            raise DataError(
                f"{sample_id}: image {image.shape[:2]} vs mask {mask.shape} size mismatch"
            )
        return SegmentationSample(
            image=image, mask=mask, id=sample_id, original_hw=image.shape[:2]
        )

    samples = ordered_parallel_map(load_one, image_paths, threads=threads)

    # Mixed-channel datasets are canonicalized to 3 channels so one set of
    # normalization stats applies everywhere.
    channel_counts = {s.image.shape[2] for s in samples}
    if len(channel_counts) > 1:
        samples = [
            s if s.image.shape[2] == 3 else s.copy_with(image=np.repeat(s.image, 3, axis=2))
            for s in samples
        ]
    return samples


def class_distribution(samples, num_classes: int) -> dict:
    """Per-class pixel counts and fractions over all masks."""
    if not samples:
        raise DataError("class distribution of an empty sample list")
    counts = np.zeros(num_classes, dtype=np.int64)
    for s in samples:
        counts += np.bincount(s.mask.reshape(-1), minlength=num_classes)
    total = int(counts.sum())
    fractions = counts / total
    return {
        "pixel_counts": [int(c) for c in counts],
        "fractions": [float(f) for f in fractions],
        "total_pixels": total,
        "num_images": len(samples),
    }


def write_manifest(path, samples, scheme: ClassScheme, stats=None) -> dict:
    manifest = {
        "num_images": len(samples),
        "class_names": list(scheme.names),
        "distribution": class_distribution(samples, scheme.num_classes),
        "image_sizes": sorted({f"{h}x{w}" for h, w in (s.hw for s in samples)}),
    }
    if stats is not None:
        manifest["normalization"] = {"mean": list(map(float, stats.mean)),
                                     "std": list(map(float, stats.std))}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
