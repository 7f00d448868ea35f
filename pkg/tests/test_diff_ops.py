"""Finite-difference checks for every op in volvid.diff.ops.

All checks run under float64; h=1e-5 central differences against the
recorded vector-Jacobian products. Threshold 1e-4 relative (acceptance),
most ops land far below it.
"""

import numpy as np
import pytest

from volvid.diff import Tensor, ops, using_dtype
from volvid.diff.gradcheck import check_gradients, numeric_grad
from volvid.mlpmaps import Grouping

TOL = 1e-4


def _p(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


@pytest.fixture(autouse=True)
def _f64():
    with using_dtype(np.float64):
        yield


def test_numeric_grad_sanity():
    # oracle check on a function with known gradient: f = sum(x^3)
    x = np.array([0.5, -1.2, 2.0])
    g = numeric_grad(lambda: float(np.sum(x**3)), x)
    np.testing.assert_allclose(g, 3 * x**2, rtol=1e-7)


def test_elementwise_and_reductions(rng):
    a, b = _p(rng, 3, 4), _p(rng, 3, 4)

    def build():
        y = ops.mul(ops.add(a, b), ops.sub(a, ops.scale(b, 0.5)))
        y = ops.add(ops.relu(y), ops.sigmoid(a))
        y = ops.add(y, ops.softplus(b))
        y = ops.add(y, ops.exp(ops.scale(a, 0.1)))
        return ops.sum(ops.mean(y, axis=1))

    assert check_gradients(build, [a, b]) < TOL


def test_matmul(rng):
    a, b = _p(rng, 4, 6), _p(rng, 6, 3)
    build = lambda: ops.sum(ops.mul(ops.matmul(a, b), ops.matmul(a, b)))
    assert check_gradients(build, [a, b]) < 1e-5


def test_cumsum_reshape_transpose_concat_getitem(rng):
    a, b = _p(rng, 2, 6), _p(rng, 2, 6)

    def build():
        y = ops.cumsum(a, axis=1)
        y = ops.transpose(ops.reshape(y, (3, 4)), (1, 0))
        z = ops.concat([y, ops.reshape(b, (4, 3))], axis=0)
        return ops.sum(ops.mul(ops.getitem(z, (slice(1, 7), slice(None))), 1.5))

    assert check_gradients(build, [a, b]) < TOL


def test_conv2d(rng):
    # random 2x4x4 input, 3x2x3x3 kernel, as in the reference example
    x, w = _p(rng, 2, 4, 4), _p(rng, 3, 2, 3, 3)
    build = lambda: ops.sum(ops.mul(ops.conv2d(x, w, stride=1, padding=1),
                                    ops.conv2d(x, w, stride=1, padding=1)))
    assert check_gradients(build, [x, w]) < 1e-5


def test_conv2d_stride2(rng):
    x, w = _p(rng, 3, 6, 6), _p(rng, 4, 3, 3, 3)
    build = lambda: ops.sum(ops.exp(ops.scale(ops.conv2d(x, w, stride=2, padding=1), 0.3)))
    assert check_gradients(build, [x, w]) < TOL


def test_deconv2d(rng):
    x, w = _p(rng, 3, 3, 3), _p(rng, 3, 2, 4, 4)
    build = lambda: ops.sum(ops.sigmoid(ops.deconv2d(x, w, stride=2, padding=1)))
    out = ops.deconv2d(x, w, stride=2, padding=1)
    assert out.shape == (2, 6, 6)  # H_out = (H-1)*s - 2p + k
    assert check_gradients(build, [x, w]) < TOL


def test_gather_rows(rng):
    table = _p(rng, 10, 4)
    idx = rng.integers(0, 10, 25)

    def build():
        rows = ops.gather_rows(table, idx)
        return ops.sum(ops.mul(rows, rows))

    assert check_gradients(build, [table]) < 1e-5


def test_interp_gather(rng):
    table = _p(rng, 12, 3)
    idx = rng.integers(0, 12, (7, 4))
    w = rng.random((7, 4))

    def build():
        return ops.sum(ops.relu(ops.interp_gather(table, idx, w)))

    assert check_gradients(build, [table]) < TOL


def test_hash_gather(rng):
    levels, tsize, feat = 3, 64, 2
    table = _p(rng, levels * tsize, feat)
    uvt = rng.random((9, 3))
    res = np.array([[2, 2, 2], [5, 5, 5], [11, 11, 11]], dtype=np.int64)

    def build():
        enc = ops.hash_gather(table, uvt, res, tsize)
        return ops.sum(ops.mul(enc, enc))

    assert check_gradients(build, [table]) < TOL


def test_cellwise_linear(rng):
    n_cells, n_pts = 4, 11
    params = _p(rng, n_cells, 3, 5)
    x = _p(rng, n_pts, 5)
    order = rng.permutation(n_pts).astype(np.int64)
    cells = np.sort(rng.integers(0, n_cells, n_pts))
    # contiguous runs of equal cell ids along the sorted order
    starts = np.concatenate([[0], np.where(np.diff(cells))[0] + 1, [n_pts]]).astype(np.int64)
    grouping = Grouping(order=order, starts=starts, cells=cells[starts[:-1]].astype(np.int64))

    def build():
        y = ops.cellwise_linear(params, x, grouping)
        return ops.sum(ops.mul(y, ops.sigmoid(y)))

    assert check_gradients(build, [params, x]) < TOL


def test_grad_none_for_untouched_param(rng):
    a, b = _p(rng, 3), _p(rng, 3)
    from volvid.diff import Graph, backward

    g = Graph()
    with g:
        loss = ops.sum(a)
    backward(g, loss)
    assert b.grad is None
    np.testing.assert_allclose(a.grad, np.ones(3))
