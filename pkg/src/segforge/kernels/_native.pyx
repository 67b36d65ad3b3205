# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled gather/scatter kernels: im2col, col2im, max-pool fwd/bwd.

Mirrors numpy_backend exactly, including per-cell accumulation order in
col2im, so backend choice never changes results bit-for-bit.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

NAME = "native"

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int sh, int sw,
           int dh, int dw, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    if floating is float:
        out = np.empty((n, c * kh * kw, oh * ow), dtype=np.float32)
    else:
        out = np.empty((n, c * kh * kw, oh * ow), dtype=np.float64)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, iy
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(oh):
                            iy = oy * sh + i * dh
                            if sw == 1:
                                # whole output row is contiguous in x
                                memcpy(&cols[b, row, oy * ow],
                                       &x[b, ch, iy, j * dw],
                                       ow * sizeof(floating))
                            else:
                                for ox in range(ow):
                                    cols[b, row, oy * ow + ox] = x[b, ch, iy, ox * sw + j * dw]
    return out


def col2im(floating[:, :, ::1] cols, int n, int c, int hp, int wp,
           int kh, int kw, int sh, int sw, int dh, int dw, int oh, int ow):
    if floating is float:
        out = np.zeros((n, c, hp, wp), dtype=np.float32)
    else:
        out = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef floating[:, :, :, ::1] x = out
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, iy
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(oh):
                            iy = oy * sh + i * dh
                            for ox in range(ow):
                                x[b, ch, iy, ox * sw + j * dw] += cols[b, row, oy * ow + ox]
    return out


def maxpool_forward(floating[:, :, :, ::1] x, int k, int s, int oh, int ow):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], wp = x.shape[3]
    if floating is float:
        out_np = np.empty((n, c, oh, ow), dtype=np.float32)
    else:
        out_np = np.empty((n, c, oh, ow), dtype=np.float64)
    idx_np = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_np
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_np
    cdef Py_ssize_t b, ch, oy, ox, i, j, iy, ix, best_i
    cdef floating best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        best = x[b, ch, oy * s, ox * s]
                        best_i = (oy * s) * wp + ox * s
                        for i in range(k):
                            iy = oy * s + i
                            for j in range(k):
                                ix = ox * s + j
                                v = x[b, ch, iy, ix]
                                if v > best:
                                    best = v
                                    best_i = iy * wp + ix
                        out[b, ch, oy, ox] = best
                        idx[b, ch, oy, ox] = best_i
    return out_np, idx_np


def maxpool_backward(floating[:, :, :, ::1] gout, cnp.int64_t[:, :, :, ::1] idx,
                     int n, int c, int hp, int wp):
    if floating is float:
        out = np.zeros((n, c, hp * wp), dtype=np.float32)
    else:
        out = np.zeros((n, c, hp * wp), dtype=np.float64)
    cdef floating[:, :, ::1] gx = out
    cdef Py_ssize_t b, ch, oy, ox
    cdef Py_ssize_t oh = gout.shape[2], ow = gout.shape[3]
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        gx[b, ch, idx[b, ch, oy, ox]] += gout[b, ch, oy, ox]
    return out.reshape(n, c, hp, wp)
