"""Pure-numpy implementations of the hot gather/scatter kernels.

Same call signatures as the compiled backend. All functions take the
already-padded input; padding/unpadding lives in the op layer so the two
backends stay interchangeable.
"""

import numpy as np

NAME = "numpy"


def im2col(x, kh, kw, sh, sw, dh, dw, oh, ow):
    """(N, C, Hp, Wp) padded input -> (N, C*kh*kw, oh*ow) patch matrix."""
    n, c, _, _ = x.shape
    sb, sc, srow, scol = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sb, sc, dh * srow, dw * scol, sh * srow, sw * scol),
        writeable=False,
    )
    return np.ascontiguousarray(patches).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, n, c, hp, wp, kh, kw, sh, sw, dh, dw, oh, ow):
    """Scatter-add the patch matrix back onto a zeroed (N, C, Hp, Wp) canvas."""
    x = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    # Accumulation order (kh outer, kw inner) matches the compiled backend so
    # both produce bit-identical sums.
    for i in range(kh):
        hi = i * dh
        for j in range(kw):
            wj = j * dw
            x[:, :, hi : hi + sh * oh : sh, wj : wj + sw * ow : sw] += cols[:, :, i, j]
    return x


def maxpool_forward(x, k, s, oh, ow):
    """Max pool the padded input; returns (values, flat argmax per window).

    Argmax indices are flat offsets into each (Hp, Wp) plane; ties resolve to
    the first element in row-major window order (numpy argmax semantics).
    """
    n, c, hp, wp = x.shape
    sb, sc, srow, scol = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, k, k),
        strides=(sb, sc, s * srow, s * scol, srow, scol),
        writeable=False,
    )
    flat = windows.reshape(n, c, oh, ow, k * k)
    local = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    ki, kj = np.divmod(local, k)
    rows = np.arange(oh)[:, None] * s + ki
    cols_ = np.arange(ow)[None, :] * s + kj
    idx = (rows * wp + cols_).astype(np.int64)
    return np.ascontiguousarray(out), np.ascontiguousarray(idx)


def maxpool_backward(gout, idx, n, c, hp, wp):
    """Route each output gradient to its argmax location on a zeroed canvas."""
    gx = np.zeros((n, c, hp * wp), dtype=gout.dtype)
    flat_idx = idx.reshape(n, c, -1)
    flat_g = gout.reshape(n, c, -1)
    np.add.at(gx, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], flat_idx), flat_g)
    return gx.reshape(n, c, hp, wp)
