"""Synthetic SAR-like dataset: a desk-scale stand-in with the same layout.

Dark speckled sea everywhere; each image additionally carries one foreground
class, cycling oil spill -> look-alike -> ship -> land so every class shows
up in any run of four images. Foreground geometry snaps to a 4-pixel grid,
matching the stride-4 resolution of the decoders under test. Oil spills are
smooth dark elongated patches; look-alikes share their intensity range but
carry a strong stripe texture; ships are small bright blobs; land is a wide
bright textured band along one edge.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError
from .samples import SegmentationSample
from .scheme import ClassScheme

GRID = 4


def _snap(rng: np.random.Generator, low: int, high: int) -> int:
    """Random multiple of GRID in [low, high)."""
    choices = np.arange(low, max(high, low + 1), GRID)
    return int(choices[rng.integers(0, len(choices))])


def _place_rect(rng, h, w, rect_h, rect_w):
    y = _snap(rng, 0, h - rect_h + 1)
    x = _snap(rng, 0, w - rect_w + 1)
    return y, x


def _sea(rng, h, w):
    # Floor keeps open-sea speckle visibly brighter than the oil band.
    return np.clip(0.10 + rng.gamma(5.0, 0.03, size=(h, w)), 0.0, 1.0)


def _elongated_dims(rng, h, w):
    if rng.random() < 0.5:
        return _snap(rng, 12, 21), _snap(rng, 32, min(49, w - 3))
    return _snap(rng, 32, min(49, h - 3)), _snap(rng, 12, 21)


def _paint_oil(rng, image, mask):
    h, w = mask.shape
    for _ in range(int(rng.integers(1, 3))):
        rh, rw = _elongated_dims(rng, h, w)
        y, x = _place_rect(rng, h, w, rh, rw)
        patch = np.clip(0.05 + 0.01 * rng.standard_normal((rh, rw)), 0.0, 1.0)
        image[y : y + rh, x : x + rw] = patch
        mask[y : y + rh, x : x + rw] = 1


def _paint_lookalike(rng, image, mask):
    h, w = mask.shape
    for _ in range(int(rng.integers(1, 3))):
        rh, rw = _elongated_dims(rng, h, w)
        y, x = _place_rect(rng, h, w, rh, rw)
        yy, xx = np.mgrid[0:rh, 0:rw]
        stripes = ((xx // 2) % 2) if rng.random() < 0.5 else ((yy // 2) % 2)
        patch = 0.04 + 0.12 * stripes + 0.01 * rng.standard_normal((rh, rw))
        image[y : y + rh, x : x + rw] = np.clip(patch, 0.0, 1.0)
        mask[y : y + rh, x : x + rw] = 2


def _paint_ship(rng, image, mask):
    h, w = mask.shape
    for _ in range(2):
        rh = _snap(rng, 12, 17)
        rw = _snap(rng, 12, 17)
        y, x = _place_rect(rng, h, w, rh, rw)
        patch = np.clip(0.92 + 0.03 * rng.standard_normal((rh, rw)), 0.0, 1.0)
        image[y : y + rh, x : x + rw] = patch
        mask[y : y + rh, x : x + rw] = 3


def _paint_land(rng, image, mask):
    h, w = mask.shape
    thickness = _snap(rng, 16, min(29, min(h, w) // 2 + 1))
    side = int(rng.integers(0, 4))
    texture = np.clip(0.55 + 0.12 * rng.standard_normal((h, w)), 0.0, 1.0)
    if side == 0:
        region = (slice(0, thickness), slice(0, w))
    elif side == 1:
        region = (slice(h - thickness, h), slice(0, w))
    elif side == 2:
        region = (slice(0, h), slice(0, thickness))
    else:
        region = (slice(0, h), slice(w - thickness, w))
    image[region] = texture[region]
    mask[region] = 4


_PAINTERS = {1: _paint_oil, 2: _paint_lookalike, 3: _paint_ship, 4: _paint_land}


def synth_samples(n: int, hw, seed: int = 0) -> list[SegmentationSample]:
    """Generate n samples in memory, deterministic per seed."""
    h, w = hw
    if n < 1:
        raise DataError(f"need n >= 1 synthetic images, got {n}")
    if h < 4 * GRID or w < 4 * GRID or h % GRID or w % GRID:
        raise DataError(f"degenerate synthetic size {h}x{w}; need multiples of {GRID}, >= {4 * GRID}")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        image = _sea(rng, h, w)
        mask = np.zeros((h, w), dtype=np.uint8)
        fg = (i % 4) + 1
        _PAINTERS[fg](rng, image, mask)
        samples.append(
            SegmentationSample(
                image=image.astype(np.float32)[:, :, None],
                mask=mask,
                id=f"synth_{i:04d}",
                original_hw=(h, w),
            )
        )
    return samples


def synth_generate(n: int, hw, seed: int, out_dir, scheme: ClassScheme) -> list[str]:
    """Write n synthetic samples to out_dir in the loader layout."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    masks_dir = out_dir / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for sample in synth_samples(n, hw, seed):
        gray = np.clip(np.round(sample.image[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(gray, mode="L").save(images_dir / f"{sample.id}.png")
        rgb = scheme.encode_mask(sample.mask)
        Image.fromarray(rgb, mode="RGB").save(masks_dir / f"{sample.id}.png")
        ids.append(sample.id)
    return ids
