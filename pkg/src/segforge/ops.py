"""Differentiable NCHW operations over the kernel backends.

Every op validates shapes, computes the forward result in the input dtype,
and registers a tape node with exactly the activations its backward needs.
Output spatial sizes follow floor((S + 2p - d*(K-1) - 1)/s) + 1.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError
from .tensor import Tensor, record

__all__ = [
    "add",
    "concat_channels",
    "conv2d",
    "batch_norm2d",
    "relu",
    "max_pool2d",
    "global_avg_pool2d",
    "bilinear_upsample",
    "softmax_channelwise",
    "dropout",
    "tensor_sum",
    "weighted_sum",
    "conv_out_size",
]


def conv_out_size(size: int, k: int, stride: int, padding: int, dilation: int = 1) -> int:
    out = (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    if out <= 0:
        raise ShapeError(
            f"non-positive output dim for size={size}, k={k}, stride={stride}, "
            f"padding={padding}, dilation={dilation}"
        )
    return out


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects an NCHW tensor, got shape {tuple(x.shape)}")


# ---------------------------------------------------------------------------
# elementwise / structural
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    out = Tensor(a.data + b.data, dtype=a.dtype)

    def backward_fn(g, saved):
        return g, g

    return record("add", (a, b), out, None, backward_fn)


def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    for t in tensors:
        _require_4d(t, "concat_channels")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1), dtype=tensors[0].dtype)
    widths = [t.shape[1] for t in tensors]

    def backward_fn(g, saved):
        grads = []
        start = 0
        for w in saved:
            grads.append(g[:, start : start + w])
            start += w
        return grads

    return record("concat_channels", tuple(tensors), out, widths, backward_fn)


def tensor_sum(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype), dtype=x.dtype)

    def backward_fn(g, saved):
        return (np.full(saved, g.reshape(())[()], dtype=g.dtype),)

    return record("sum", (x,), out, x.shape, backward_fn)


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar dot product with a constant weight array (gradient probes)."""
    weights = np.asarray(weights, dtype=x.dtype)
    if weights.shape != x.shape:
        raise ShapeError(f"weights shape {weights.shape} must match {tuple(x.shape)}")
    out = Tensor(np.asarray((x.data * weights).sum(), dtype=x.dtype), dtype=x.dtype)

    def backward_fn(g, saved):
        return (saved * g.reshape(())[()],)

    return record("weighted_sum", (x,), out, weights, backward_fn)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), dtype=x.dtype)
    mask = x.data > 0

    def backward_fn(g, saved):
        return (g * saved,)

    return record("relu", (x,), out, mask, backward_fn)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    groups: int = 1,
) -> Tensor:
    _require_4d(x, "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be OIHW, got shape {tuple(weight.shape)}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ShapeError(
            f"conv2d requires stride>=1, dilation>=1, padding>=0 "
            f"(got {stride}, {dilation}, {padding})"
        )
    n, c, h, w = x.shape
    o, ig, kh, kw = weight.shape
    if c % groups != 0 or o % groups != 0:
        raise ShapeError(f"channels ({c} in, {o} out) not divisible by groups={groups}")
    if ig != c // groups:
        raise ShapeError(
            f"weight in-channel dim {ig} does not match in_channels/groups = {c}//{groups}"
        )
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"bias shape {tuple(bias.shape)} must be ({o},)")

    oh = conv_out_size(h, kh, stride, padding, dilation)
    ow = conv_out_size(w, kw, stride, padding, dilation)

    if padding > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = kernels.im2col(xp, kh, kw, stride, stride, dilation, dilation, oh, ow)

    og = o // groups
    kdim = ig * kh * kw
    w_mat = weight.data.reshape(groups, og, kdim)
    cols_g = cols.reshape(n, groups, kdim, oh * ow)
    out_g = np.matmul(w_mat, cols_g)  # (n, groups, og, oh*ow)
    out_data = out_g.reshape(n, o, oh, ow)
    if bias is not None:
        out_data = out_data + bias.data.reshape(1, o, 1, 1)
    out = Tensor(out_data, dtype=x.dtype)

    saved = (cols_g, weight.data, x.shape, bias is not None)

    def backward_fn(g, saved_state):
        cols_gs, w_data, x_shape, has_bias = saved_state
        nn, cc, hh, ww = x_shape
        hp = hh + 2 * padding
        wp = ww + 2 * padding
        g4 = g.reshape(nn, groups, og, oh * ow)
        w_mat_s = w_data.reshape(groups, og, kdim)
        gw = np.einsum("ngol,ngkl->gok", g4, cols_gs).reshape(w_data.shape)
        gcols = np.matmul(w_mat_s.transpose(0, 2, 1), g4)  # (n, groups, kdim, L)
        gxp = kernels.col2im(
            np.ascontiguousarray(gcols.reshape(nn, cc * kh * kw, oh * ow)),
            nn, cc, hp, wp, kh, kw, stride, stride, dilation, dilation, oh, ow,
        )
        if padding > 0:
            gx = gxp[:, :, padding : padding + hh, padding : padding + ww]
        else:
            gx = gxp
        gb = g.sum(axis=(0, 2, 3)) if has_bias else None
        if has_bias:
            return np.ascontiguousarray(gx), gw, gb
        return np.ascontiguousarray(gx), gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out, saved, backward_fn)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    training: bool,
    momentum: float = 0.1,
    epsilon: float = 1e-5,
) -> Tensor:
    _require_4d(x, "batch_norm2d")
    c = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if t.shape != (c,):
            raise ShapeError(f"batch_norm2d {name} shape {tuple(t.shape)} must be ({c},)")
    if epsilon <= 0:
        raise ShapeError(f"epsilon must be positive, got {epsilon}")

    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))  # population variance
        # Running buffers are mutated in place: the documented exception to
        # tensor immutability.
        running_mean.data[:] = (1.0 - momentum) * running_mean.data + momentum * mean
        running_var.data[:] = (1.0 - momentum) * running_var.data + momentum * var
    else:
        mean = running_mean.data
        var = running_var.data

    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = Tensor(
        gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1),
        dtype=x.dtype,
    )

    if training:
        saved = (xhat, inv_std, gamma.data)

        def backward_fn(g, saved_state):
            xh, istd, gdata = saved_state
            m = g.shape[0] * g.shape[2] * g.shape[3]
            dgamma = (g * xh).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gdata.reshape(1, -1, 1, 1)
            dx = (
                dxhat
                - dxhat.mean(axis=(0, 2, 3), keepdims=True)
                - xh * (dxhat * xh).mean(axis=(0, 2, 3), keepdims=True)
            ) * istd.reshape(1, -1, 1, 1)
            return dx, dgamma, dbeta
    else:
        saved = (xhat, inv_std, gamma.data)

        def backward_fn(g, saved_state):
            xh, istd, gdata = saved_state
            dgamma = (g * xh).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dx = g * (gdata * istd).reshape(1, -1, 1, 1)
            return dx, dgamma, dbeta

    return record("batch_norm2d", (x, gamma, beta), out, saved, backward_fn)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def max_pool2d(x: Tensor, kernel_size: int, stride: int, padding: int = 0) -> Tensor:
    _require_4d(x, "max_pool2d")
    if kernel_size < 1 or stride < 1:
        raise ShapeError("max_pool2d kernel and stride must be positive")
    if padding >= kernel_size:
        raise ShapeError("max_pool2d padding must be smaller than the kernel")
    n, c, h, w = x.shape
    if h < kernel_size or w < kernel_size:
        if h + 2 * padding < kernel_size or w + 2 * padding < kernel_size:
            raise ShapeError(
                f"spatial dims {(h, w)} smaller than pooling kernel {kernel_size}"
            )
    oh = conv_out_size(h, kernel_size, stride, padding)
    ow = conv_out_size(w, kernel_size, stride, padding)
    if padding > 0:
        xp = np.pad(
            x.data,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=-np.inf,
        )
    else:
        xp = x.data
    out_data, idx = kernels.maxpool_forward(np.ascontiguousarray(xp), kernel_size, stride, oh, ow)
    out = Tensor(out_data, dtype=x.dtype)
    hp, wp = xp.shape[2], xp.shape[3]

    def backward_fn(g, saved):
        amax, nn, cc, hh, ww = saved
        gxp = kernels.maxpool_backward(np.ascontiguousarray(g), amax, nn, cc, hp, wp)
        if padding > 0:
            return (np.ascontiguousarray(gxp[:, :, padding : padding + hh, padding : padding + ww]),)
        return (gxp,)

    return record("max_pool2d", (x,), out, (idx, n, c, h, w), backward_fn)


def global_avg_pool2d(x: Tensor) -> Tensor:
    _require_4d(x, "global_avg_pool2d")
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError("global_avg_pool2d on empty spatial extent")
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True), dtype=x.dtype)

    def backward_fn(g, saved):
        hh, ww = saved
        return (np.broadcast_to(g / (hh * ww), (g.shape[0], g.shape[1], hh, ww)).astype(g.dtype),)

    return record("global_avg_pool2d", (x,), out, (h, w), backward_fn)


# ---------------------------------------------------------------------------
# bilinear interpolation (half-pixel centers, align_corners=False)
# ---------------------------------------------------------------------------

_INTERP_CACHE: dict[tuple, np.ndarray] = {}


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    key = (n_in, n_out, np.dtype(dtype).str)
    cached = _INTERP_CACHE.get(key)
    if cached is not None:
        return cached
    if n_in == n_out:
        mat = np.eye(n_in, dtype=dtype)
    else:
        mat = np.zeros((n_out, n_in), dtype=dtype)
        scale = n_in / n_out
        for i in range(n_out):
            src = (i + 0.5) * scale - 0.5
            lo = math.floor(src)
            frac = src - lo
            lo0 = min(max(lo, 0), n_in - 1)
            lo1 = min(max(lo + 1, 0), n_in - 1)
            mat[i, lo0] += 1.0 - frac
            mat[i, lo1] += frac
    _INTERP_CACHE[key] = mat
    return mat


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _require_4d(x, "bilinear_upsample")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {(out_h, out_w)}")
    n, c, h, w = x.shape
    ah = _interp_matrix(h, out_h, x.dtype)
    aw = _interp_matrix(w, out_w, x.dtype)
    # Separable interpolation as two matmuls: rows then columns.
    out_data = np.matmul(ah, np.matmul(x.data, aw.T))
    out = Tensor(out_data, dtype=x.dtype)

    def backward_fn(g, saved):
        ah_s, aw_s = saved
        return (np.ascontiguousarray(np.matmul(ah_s.T, np.matmul(g, aw_s))),)

    return record("bilinear_upsample", (x,), out, (ah, aw), backward_fn)


# ---------------------------------------------------------------------------
# softmax / dropout
# ---------------------------------------------------------------------------

def softmax_channelwise(x: Tensor) -> Tensor:
    _require_4d(x, "softmax_channelwise")
    if not np.all(np.isfinite(x.data)):
        raise NumericalError("softmax_channelwise received non-finite logits")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=1, keepdims=True)
    out = Tensor(probs, dtype=x.dtype)

    def backward_fn(g, saved):
        p = saved
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return record("softmax_channelwise", (x,), out, probs, backward_fn)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        out = Tensor(x.data, dtype=x.dtype)

        def backward_fn(g, saved):
            return (g,)

        return record("dropout", (x,), out, None, backward_fn)

    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    mask = keep.astype(x.dtype) * np.asarray(scale, dtype=x.dtype)
    out = Tensor(x.data * mask, dtype=x.dtype)

    def backward_fn(g, saved):
        return (g * saved,)

    return record("dropout", (x,), out, mask, backward_fn)
