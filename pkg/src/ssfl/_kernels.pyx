# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels.

Contracts match :mod:`ssfl._kernels_py` exactly; see that module for shapes.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int kh, int kw, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - kh + 1
    cdef Py_ssize_t wo = w + 2 * pad - kw + 1
    cdef Py_ssize_t k = c * kh * kw
    out_arr = np.zeros((n * ho * wo, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row, col
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                row = (b * ho + oy) * wo + ox
                for ch in range(c):
                    for i in range(kh):
                        iy = oy + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            col = (ch * kh + i) * kw + j
                            out[row, col] = x[b, ch, iy, ix]
    return out_arr


def col2im(const double[:, ::1] cols, tuple shape, int kh, int kw, int pad):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - kh + 1
    cdef Py_ssize_t wo = w + 2 * pad - kw + 1
    if cols.shape[0] != n * ho * wo or cols.shape[1] != c * kh * kw:
        raise ValueError("column matrix does not match image shape")
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row, col
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                row = (b * ho + oy) * wo + ox
                for ch in range(c):
                    for i in range(kh):
                        iy = oy + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            col = (ch * kh + i) * kw + j
                            dx[b, ch, iy, ix] += cols[row, col]
    return dx_arr


def maxpool2_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // 2, wo = x.shape[3] // 2
    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    idx_arr = np.empty((n, c, ho, wo), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ch, oy, ox
    cdef int k, best_k
    cdef double v, best
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[b, ch, 2 * oy, 2 * ox]
                    best_k = 0
                    for k in range(1, 4):
                        v = x[b, ch, 2 * oy + k // 2, 2 * ox + k % 2]
                        if v > best:
                            best = v
                            best_k = k
                    out[b, ch, oy, ox] = best
                    idx[b, ch, oy, ox] = best_k
    return out_arr, idx_arr


def maxpool2_backward(const double[:, :, :, ::1] dout, const cnp.int8_t[:, :, :, ::1] idx, tuple shape):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], ho = dout.shape[2], wo = dout.shape[3]
    dx_arr = np.zeros(shape, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, oy, ox
    cdef int k
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    k = idx[b, ch, oy, ox]
                    dx[b, ch, 2 * oy + k // 2, 2 * ox + k % 2] = dout[b, ch, oy, ox]
    return dx_arr


from libc.math cimport sqrt


def standardize_rows(const double[:, ::1] v, double eps):
    cdef Py_ssize_t r = v.shape[0], m = v.shape[1], i, j
    out_arr = np.empty((r, m), dtype=np.float64)
    inv_arr = np.empty(r, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] inv = inv_arr
    cdef double mu, acc, c, s
    for i in range(r):
        acc = 0.0
        for j in range(m):
            acc += v[i, j]
        mu = acc / m
        acc = 0.0
        for j in range(m):
            c = v[i, j] - mu
            acc += c * c
        s = 1.0 / sqrt(acc / m + eps)
        inv[i] = s
        for j in range(m):
            out[i, j] = (v[i, j] - mu) * s
    return out_arr, inv_arr


def standardize_rows_backward(const double[:, ::1] dvhat, const double[:, ::1] vhat, const double[::1] inv):
    cdef Py_ssize_t r = dvhat.shape[0], m = dvhat.shape[1], i, j
    out_arr = np.empty((r, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double a, b
    for i in range(r):
        a = 0.0
        b = 0.0
        for j in range(m):
            a += dvhat[i, j]
            b += dvhat[i, j] * vhat[i, j]
        a /= m
        b /= m
        for j in range(m):
            out[i, j] = inv[i] * (dvhat[i, j] - a - vhat[i, j] * b)
    return out_arr
