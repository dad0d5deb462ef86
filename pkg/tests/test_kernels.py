import numpy as np
import pytest

from ssfl import _kernels_py as pyk
from ssfl import kernels

try:
    from ssfl import _kernels as ck
except ImportError:  # extension not built
    ck = None

needs_ext = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def naive_conv3x3(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, f, h, wd))
    for i in range(h):
        for j in range(wd):
            patch = xp[:, :, i:i + 3, j:j + 3]
            out[:, :, i, j] = np.tensordot(patch, w, axes=([1, 2, 3], [1, 2, 3])) + b
    return out


@pytest.mark.parametrize("impl", [pyk, pytest.param(ck, marks=needs_ext)], ids=["python", "cython"])
def test_im2col_matches_direct_convolution(impl, rng):
    x = rng.normal(size=(2, 3, 5, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    cols = impl.im2col(np.ascontiguousarray(x), 3, 3, 1)
    out = (cols @ w.reshape(4, -1).T + b).reshape(2, 5, 6, 4).transpose(0, 3, 1, 2)
    np.testing.assert_allclose(out, naive_conv3x3(x, w, b), atol=1e-12)


@pytest.mark.parametrize("impl", [pyk, pytest.param(ck, marks=needs_ext)], ids=["python", "cython"])
def test_col2im_is_adjoint_of_im2col(impl, rng):
    # <im2col(x), y> == <x, col2im(y)>
    x = rng.normal(size=(2, 3, 4, 5))
    cols = impl.im2col(np.ascontiguousarray(x), 3, 3, 1)
    y = rng.normal(size=cols.shape)
    back = impl.col2im(np.ascontiguousarray(y), x.shape, 3, 3, 1)
    assert np.isclose((cols * y).sum(), (x * back).sum(), rtol=1e-12)


@needs_ext
def test_compiled_and_python_kernels_agree(rng):
    x = rng.normal(size=(3, 2, 6, 7))
    np.testing.assert_array_equal(ck.im2col(x, 3, 3, 1), pyk.im2col(x, 3, 3, 1))
    cols = rng.normal(size=(3 * 6 * 7, 18))
    np.testing.assert_allclose(ck.col2im(cols, x.shape, 3, 3, 1), pyk.col2im(cols, x.shape, 3, 3, 1), atol=1e-13)
    out_c, idx_c = ck.maxpool2_forward(x)
    out_p, idx_p = pyk.maxpool2_forward(x)
    np.testing.assert_array_equal(out_c, out_p)
    np.testing.assert_array_equal(idx_c, idx_p)
    d = rng.normal(size=out_c.shape)
    np.testing.assert_array_equal(ck.maxpool2_backward(d, idx_c, x.shape), pyk.maxpool2_backward(d, idx_p, x.shape))
    v = rng.normal(size=(5, 40))
    vh_c, inv_c = ck.standardize_rows(v, 1e-5)
    vh_p, inv_p = pyk.standardize_rows(v, 1e-5)
    np.testing.assert_allclose(vh_c, vh_p, atol=1e-12)
    np.testing.assert_allclose(inv_c, inv_p, rtol=1e-12)
    dv = rng.normal(size=v.shape)
    np.testing.assert_allclose(
        ck.standardize_rows_backward(dv, vh_c, inv_c), pyk.standardize_rows_backward(dv, vh_p, inv_p), atol=1e-12
    )


@pytest.mark.parametrize("impl", [pyk, pytest.param(ck, marks=needs_ext)], ids=["python", "cython"])
def test_maxpool_picks_first_maximum_and_routes_gradient(impl):
    x = np.array([[[[1.0, 3.0], [3.0, 0.0]]]])
    out, idx = impl.maxpool2_forward(x)
    assert out[0, 0, 0, 0] == 3.0 and idx[0, 0, 0, 0] == 1
    dx = impl.maxpool2_backward(np.ones((1, 1, 1, 1)), idx, x.shape)
    np.testing.assert_array_equal(dx[0, 0], [[0.0, 1.0], [0.0, 0.0]])


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
