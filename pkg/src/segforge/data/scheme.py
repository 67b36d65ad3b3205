"""Class scheme and mask palette handling.

Default palette anchors: oil spill rendered in cyan, ship in brown; the
remaining colors follow the dataset legend conventions. All of it can be
overridden by a palette file (one `name index R G B` line per class).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

CLASS_NAMES = ("sea_surface", "oil_spill", "oil_spill_lookalike", "ship", "land")
REPORT_NAMES = ("Sea surface", "Oil spill", "Oil spill look-alike", "Ship", "Land")

DEFAULT_PALETTE = {
    0: (0, 0, 0),        # sea surface
    1: (0, 255, 255),    # oil spill (cyan)
    2: (255, 0, 0),      # look-alike
    3: (153, 76, 0),     # ship (brown)
    4: (0, 153, 0),      # land
}


@dataclass
class ClassScheme:
    names: tuple = CLASS_NAMES
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    def __post_init__(self):
        if sorted(self.palette) != list(range(len(self.names))):
            raise DataError(
                f"palette indices must be contiguous 0..{len(self.names) - 1}, "
                f"got {sorted(self.palette)}"
            )
        colors = list(self.palette.values())
        if len(set(colors)) != len(colors):
            raise DataError("palette colors must be distinct per class")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def encode_mask(self, mask: np.ndarray) -> np.ndarray:
        """Class-index mask (H, W) -> palette RGB image (H, W, 3) uint8."""
        if mask.max(initial=0) >= self.num_classes:
            raise DataError(f"mask contains index >= {self.num_classes}")
        lut = np.zeros((self.num_classes, 3), dtype=np.uint8)
        for idx, rgb in self.palette.items():
            lut[idx] = rgb
        return lut[mask]

    def decode_mask(self, rgb: np.ndarray, source: str = "<mask>") -> np.ndarray:
        """Palette RGB (H, W, 3) -> class indices; unknown colors name the
        offending pixel."""
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DataError(f"{source}: mask must be HxWx3 RGB, got shape {rgb.shape}")
        packed = (
            rgb[..., 0].astype(np.int32) << 16
        ) | (rgb[..., 1].astype(np.int32) << 8) | rgb[..., 2].astype(np.int32)
        out = np.full(rgb.shape[:2], -1, dtype=np.int16)
        for idx, (r, g, b) in self.palette.items():
            out[packed == ((r << 16) | (g << 8) | b)] = idx
        if (out < 0).any():
            ys, xs = np.nonzero(out < 0)
            y, x = int(ys[0]), int(xs[0])
            raise DataError(
                f"{source}: unknown palette color {tuple(int(v) for v in rgb[y, x])} "
                f"at pixel (row={y}, col={x})"
            )
        return out.astype(np.uint8)


def load_palette_file(path) -> ClassScheme:
    """Parse `name index R G B` lines (blank lines and # comments ignored)."""
    names = {}
    palette = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 'name index R G B', got {line!r}")
            name, idx, r, g, b = parts
            try:
                idx, r, g, b = int(idx), int(r), int(g), int(b)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer field in {line!r}") from exc
            if not all(0 <= v <= 255 for v in (r, g, b)):
                raise DataError(f"{path}:{lineno}: RGB out of range in {line!r}")
            names[idx] = name
            palette[idx] = (r, g, b)
    if not names:
        raise DataError(f"{path}: empty palette file")
    ordered = tuple(names[i] for i in sorted(names))
    return ClassScheme(names=ordered, palette=palette)


def write_palette_file(scheme: ClassScheme, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx, name in enumerate(scheme.names):
            r, g, b = scheme.palette[idx]
            fh.write(f"{name} {idx} {r} {g} {b}\n")
