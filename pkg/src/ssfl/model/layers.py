"""Layer kernels with hand-derived backward passes.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache and returns ``dx`` first,
followed by parameter gradients.
"""
import numpy as np

from .. import kernels

NORM_EPS = 1e-5
BN_MOMENTUM = 0.1


def dense_forward(x, w, b):
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def conv3x3_forward(x, w, b):
    """Stride 1, zero padding 1; ``w`` has shape (F, C, 3, 3)."""
    n, _, h, wd = x.shape
    f = w.shape[0]
    cols = kernels.im2col(x, 3, 3, 1)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, cols, w)


def conv3x3_backward(dout, cache):
    shape, cols, w = cache
    f = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dx = kernels.col2im(d2 @ w.reshape(f, -1), shape, 3, 3, 1)
    return dx, dw, db


def maxpool_forward(x):
    out, idx = kernels.maxpool2_forward(x)
    return out, (idx, x.shape)


def maxpool_backward(dout, cache):
    idx, shape = cache
    return kernels.maxpool2_backward(dout, idx, shape)


def _standardize(v):
    # normalizes over the last axis
    shape = v.shape
    vhat, inv = kernels.standardize_rows(v.reshape(-1, shape[-1]), NORM_EPS)
    return vhat.reshape(shape), inv.reshape(shape[:-1] + (1,))


def _standardize_backward(dvhat, vhat, inv):
    shape = dvhat.shape
    m = shape[-1]
    d = kernels.standardize_rows_backward(dvhat.reshape(-1, m), vhat.reshape(-1, m), inv.reshape(-1))
    return d.reshape(shape)


def _as_ncs(x):
    return x.reshape(x.shape[0], x.shape[1], -1)


def group_norm_forward(x, gamma, beta, groups):
    n, c = x.shape[:2]
    x3 = _as_ncs(x)
    s = x3.shape[2]
    vhat, inv = _standardize(x3.reshape(n, groups, (c // groups) * s))
    xhat = vhat.reshape(n, c, s)
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out.reshape(x.shape), (xhat, inv, gamma, groups, x.shape)


def group_norm_backward(dout, cache):
    xhat, inv, gamma, groups, shape = cache
    n, c, s = xhat.shape
    d3 = _as_ncs(dout)
    dgamma = (d3 * xhat).sum(axis=(0, 2))
    dbeta = d3.sum(axis=(0, 2))
    dxhat = (d3 * gamma[None, :, None]).reshape(n, groups, -1)
    dx = _standardize_backward(dxhat, xhat.reshape(n, groups, -1), inv)
    return dx.reshape(shape), dgamma, dbeta


def batch_norm_forward(x, gamma, beta, running_mean, running_var, train, update_stats=True):
    """Train mode normalizes with batch statistics and, when ``update_stats``,
    moves the running estimates in place; eval mode uses the running estimates."""
    n, c = x.shape[:2]
    x3 = _as_ncs(x)
    s = x3.shape[2]
    if train:
        v = x3.transpose(1, 0, 2).reshape(c, n * s)
        vhat, inv = _standardize(v)
        xhat = vhat.reshape(c, n, s).transpose(1, 0, 2)
        if update_stats:
            m = n * s
            mu = v.mean(axis=1)
            var = np.maximum(1.0 / inv[:, 0] ** 2 - NORM_EPS, 0.0)
            unbiased = var * (m / (m - 1)) if m > 1 else var
            running_mean *= 1 - BN_MOMENTUM
            running_mean += BN_MOMENTUM * mu
            running_var *= 1 - BN_MOMENTUM
            running_var += BN_MOMENTUM * unbiased
    else:
        inv = 1.0 / np.sqrt(running_var + NORM_EPS)
        xhat = (x3 - running_mean[None, :, None]) * inv[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out.reshape(x.shape), (xhat, inv, gamma, train, x.shape)


def batch_norm_backward(dout, cache):
    xhat, inv, gamma, train, shape = cache
    n, c, s = xhat.shape
    d3 = _as_ncs(dout)
    dgamma = (d3 * xhat).sum(axis=(0, 2))
    dbeta = d3.sum(axis=(0, 2))
    dxhat = d3 * gamma[None, :, None]
    if train:
        dv = dxhat.transpose(1, 0, 2).reshape(c, n * s)
        vhat = xhat.transpose(1, 0, 2).reshape(c, n * s)
        dx = _standardize_backward(dv, vhat, inv).reshape(c, n, s).transpose(1, 0, 2)
    else:
        dx = dxhat * inv[None, :, None]
    return np.ascontiguousarray(dx).reshape(shape), dgamma, dbeta
