"""Mean per-pixel cross-entropy from logits, log-sum-exp stabilized."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, record


def cross_entropy_loss(logits: Tensor, target: np.ndarray) -> Tensor:
    """logits (N, K, H, W), target (N, H, W) int class indices -> scalar loss."""
    if logits.ndim != 4:
        raise ShapeError(f"logits must be NxKxHxW, got {tuple(logits.shape)}")
    target = np.asarray(target)
    n, k, h, w = logits.shape
    if target.shape != (n, h, w):
        raise ShapeError(
            f"target shape {target.shape} must be {(n, h, w)} for logits {tuple(logits.shape)}"
        )
    if not np.issubdtype(target.dtype, np.integer):
        raise ShapeError(f"target must contain integer class indices, got {target.dtype}")
    if target.min(initial=0) < 0 or target.max(initial=0) >= k:
        raise ShapeError(f"target indices must lie in [0, {k}), got "
                         f"[{target.min()}, {target.max()}]")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))  # (N, H, W)
    picked = np.take_along_axis(z, target[:, None].astype(np.int64), axis=1)[:, 0]
    per_pixel = lse - picked
    npix = n * h * w
    loss = Tensor(np.asarray(per_pixel.sum() / npix, dtype=logits.dtype), dtype=logits.dtype)

    saved = (z, lse, target.astype(np.int64), npix)

    def backward_fn(g, saved_state):
        zz, lse_s, tgt, count = saved_state
        probs = np.exp(zz - lse_s[:, None])
        onehot_rows = np.zeros_like(probs)
        np.put_along_axis(onehot_rows, tgt[:, None], 1.0, axis=1)
        scale = g.reshape(())[()] / count
        return ((probs - onehot_rows) * scale,)

    return record("cross_entropy", (logits,), loss, saved, backward_fn)
