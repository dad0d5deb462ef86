"""Numpy reference implementations of the convolution and pooling kernels.

Column layout for ``im2col``: one row per output pixel, ordered (batch, y, x);
one column per (channel, ky, kx), matching ``weight.reshape(F, -1)``.
Max-pool windows are 2x2 with stride 2; the stored index is ``2*dy + dx`` of
the first maximum in row-major window order.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, pad):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n, c, ho, wo, kh, kw
    ho, wo = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols, shape, kh, kw, pad):
    n, c, h, w = shape
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    if cols.shape != (n * ho * wo, c * kh * kw):
        raise ValueError("column matrix does not match image shape")
    d = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + ho, j:j + wo] += d[:, :, i, j]
    return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])


def _windows(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    v = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    return v.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)


def maxpool2_forward(x):
    win = _windows(x)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int8)


def maxpool2_backward(dout, idx, shape):
    n, c, ho, wo = dout.shape
    win = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(win, idx.astype(np.intp)[..., None], dout[..., None], axis=-1)
    dx = np.zeros(shape)
    dx[:, :, :2 * ho, :2 * wo] = (
        win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    return dx


def standardize_rows(v, eps):
    """Zero-mean, unit-variance rows (population variance plus ``eps``)."""
    c = v - v.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(np.einsum("ij,ij->i", c, c) / v.shape[1] + eps)
    return c * inv[:, None], inv


def standardize_rows_backward(dvhat, vhat, inv):
    m = dvhat.shape[1]
    a = dvhat.sum(axis=1) / m
    b = np.einsum("ij,ij->i", dvhat, vhat) / m
    return inv[:, None] * (dvhat - a[:, None] - vhat * b[:, None])
