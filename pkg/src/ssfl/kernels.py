"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``SSFL_PURE_PYTHON=1`` before import to force the numpy path.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("SSFL_PURE_PYTHON"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def im2col(x, kh, kw, pad):
    return _impl.im2col(_c(x), kh, kw, pad)


def col2im(cols, shape, kh, kw, pad):
    return _impl.col2im(_c(cols), tuple(shape), kh, kw, pad)


def maxpool2_forward(x):
    return _impl.maxpool2_forward(_c(x))


def maxpool2_backward(dout, idx, shape):
    return _impl.maxpool2_backward(_c(dout), np.ascontiguousarray(idx, dtype=np.int8), tuple(shape))


def standardize_rows(v, eps):
    return _impl.standardize_rows(_c(v), float(eps))


def standardize_rows_backward(dvhat, vhat, inv):
    return _impl.standardize_rows_backward(_c(dvhat), _c(vhat), _c(inv))
