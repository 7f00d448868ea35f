"""Differentiable operations recorded onto the active Graph.

Covers the substrate the engine needs: dense linear algebra, 2D conv /
transposed conv for the map decoder, elementwise nonlinearities, reductions,
and the fused gather ops used by the hash/tri-plane encoders and the
per-cell tiny-MLP evaluation.
"""

from __future__ import annotations

import builtins

import numpy as np

from . import conv as _conv
from .tensor import ShapeError, Tensor, any_requires_grad, as_tensor, record

_sum = builtins.sum


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, vjp_a, vjp_b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}") from e
    out = Tensor(data, requires_grad=any_requires_grad(a, b), dtype=data.dtype)
    record(
        (a, b),
        out,
        lambda g: (
            _unbroadcast(vjp_a(g, a.data, b.data), a.shape),
            _unbroadcast(vjp_b(g, a.data, b.data), b.shape),
        ),
    )
    return out


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scale(a, s: float):
    a = as_tensor(a)
    s = float(s)
    out = Tensor(a.data * s, requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (g * s,))
    return out


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at exactly 0
    out = Tensor(np.where(mask, a.data, 0), requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (np.where(mask, g, 0),))
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # stable in both tails
    pos = x >= 0
    z = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a):
    a = as_tensor(a)
    y = _sigmoid(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (g * y * (1.0 - y),))
    return out


def softplus(a):
    a = as_tensor(a)
    y = np.log1p(np.exp(-np.abs(a.data))) + np.maximum(a.data, 0)
    out = Tensor(y, requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (g * _sigmoid(a.data),))
    return out


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (g * y,))
    return out


_ELEMENTWISE = {}


def elementwise(op_tag: str, *operands):
    """Tag-dispatched elementwise entry point (relu/sigmoid/softplus/add/mul/scale)."""
    try:
        fn = _ELEMENTWISE[op_tag]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_tag!r}") from None
    return fn(*operands)


_ELEMENTWISE.update(
    relu=relu, sigmoid=sigmoid, softplus=softplus, add=add, mul=mul, scale=scale
)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from e
    out = Tensor(data, requires_grad=any_requires_grad(a, b), dtype=data.dtype)

    def vjp(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad  # 1D @ 1D

    record((a, b), out, vjp)
    return out


def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    out = Tensor(data, requires_grad=a.requires_grad, dtype=a.dtype)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    record((a,), out, vjp)
    return out


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def cumsum(a, axis: int):
    a = as_tensor(a)
    out = Tensor(np.cumsum(a.data, axis=axis), requires_grad=a.requires_grad, dtype=a.dtype)

    def vjp(g):
        rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        return (rev,)

    record((a,), out, vjp)
    return out


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad, dtype=a.dtype)
    record((a,), out, lambda g: (g.reshape(a.shape),))
    return out


def transpose(a, axes=None):
    a = as_tensor(a)
    out = Tensor(
        np.ascontiguousarray(a.data.transpose(axes)), requires_grad=a.requires_grad, dtype=a.dtype
    )
    inv = None if axes is None else tuple(np.argsort(axes))
    record((a,), out, lambda g: (g.transpose(inv),))
    return out


def concat(tensors, axis: int = 0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, requires_grad=any_requires_grad(*tensors), dtype=data.dtype)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    record(tuple(tensors), out, vjp)
    return out


def getitem(a, key):
    a = as_tensor(a)
    out = Tensor(np.array(a.data[key]), requires_grad=a.requires_grad, dtype=a.dtype)

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, key, g)
        return (buf,)

    record((a,), out, vjp)
    return out


def conv2d(x, w, stride: int = 1, padding: int = 0):
    """Cross-correlation of x [C_in,H,W] with kernel w [C_out,C_in,k,k]."""
    x, w = as_tensor(x), as_tensor(w)
    data = _conv.conv2d_forward(x.data, w.data, stride, padding)
    out = Tensor(data, requires_grad=any_requires_grad(x, w), dtype=data.dtype)
    k = w.shape[2]

    def vjp(g):
        dx = _conv.conv2d_grad_input(g, w.data, stride, padding, x.shape)
        dw = _conv.conv2d_grad_kernel(g, x.data, k, stride, padding, w.shape)
        return dx, dw

    record((x, w), out, vjp)
    return out


def deconv2d(x, w, stride: int = 1, padding: int = 0):
    """Transposed conv of x [C_in,H,W] with kernel w [C_in,C_out,k,k]."""
    x, w = as_tensor(x), as_tensor(w)
    data = _conv.deconv2d_forward(x.data, w.data, stride, padding)
    out = Tensor(data, requires_grad=any_requires_grad(x, w), dtype=data.dtype)
    k = w.shape[2]

    def vjp(g):
        dx = _conv.deconv2d_grad_input(g, w.data, stride, padding)
        dw = _conv.deconv2d_grad_kernel(g, x.data, k, stride, padding, w.shape)
        return dx, dw

    record((x, w), out, vjp)
    return out


def gather_rows(table, idx: np.ndarray):
    """out[n] = table[idx[n]]; backward scatter-adds into the table."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(table.data[idx], requires_grad=table.requires_grad, dtype=table.dtype)

    def vjp(g):
        buf = np.zeros_like(table.data)
        flat = idx.ravel()
        gf = g.reshape(len(flat), -1)
        for c in range(gf.shape[1]):
            buf[:, c] = np.bincount(flat, weights=gf[:, c], minlength=buf.shape[0])
        return (buf,)

    record((table,), out, vjp)
    return out


def interp_gather(table, idx: np.ndarray, w: np.ndarray):
    """Weighted corner gather: out[n] = sum_k w[n,k] * table[idx[n,k]].

    The interpolation primitive behind bilinear plane sampling; idx and w are
    precomputed corner indices/weights and carry no gradient.
    """
    from .. import backend

    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    w = np.asarray(w, dtype=table.dtype)
    data = backend.interp_gather_fwd(table.data, idx, w)
    out = Tensor(data, requires_grad=table.requires_grad, dtype=table.dtype)

    def vjp(g):
        return (backend.interp_gather_bwd(np.ascontiguousarray(g), idx, w, table.shape),)

    record((table,), out, vjp)
    return out


def hash_gather(table, uvt: np.ndarray, resolutions: np.ndarray, table_size: int):
    """Multi-level hashed trilinear lookup.

    table      [L*T, F] entries, level-major
    uvt        [N, 3] coordinates in the unit cube
    resolutions[L, 3] lattice resolution per level
    Returns [N, L*F] with levels concatenated.
    """
    from .. import backend

    table = as_tensor(table)
    uvt = np.ascontiguousarray(uvt, dtype=table.dtype)
    resolutions = np.ascontiguousarray(resolutions, dtype=np.int64)
    data = backend.hash_gather_fwd(table.data, uvt, resolutions, table_size)
    out = Tensor(data, requires_grad=table.requires_grad, dtype=table.dtype)

    def vjp(g):
        return (
            backend.hash_gather_bwd(
                np.ascontiguousarray(g), uvt, resolutions, table_size, table.shape
            ),
        )

    record((table,), out, vjp)
    return out


def cellwise_linear(params, x, grouping):
    """Per-cell linear layers evaluated group-by-group.

    params   [C, p_out, p_in] weight matrix per cell
    x        [N, p_in] inputs
    grouping precomputed sort of the batch by cell (see mlpmaps.group_points)
    """
    params, x = as_tensor(params), as_tensor(x)
    order, starts, cells = grouping.order, grouping.starts, grouping.cells
    n = x.shape[0]
    p_out = params.shape[1]
    xo = x.data[order]
    out_o = np.empty((n, p_out), dtype=x.dtype)
    pd = params.data
    for gi in range(len(cells)):
        s, e = starts[gi], starts[gi + 1]
        out_o[s:e] = xo[s:e] @ pd[cells[gi]].T
    data = np.empty_like(out_o)
    data[order] = out_o
    out = Tensor(data, requires_grad=any_requires_grad(params, x), dtype=x.dtype)

    def vjp(g):
        go = np.ascontiguousarray(g[order])
        dparams = np.zeros_like(pd)
        dxo = np.empty((n, params.shape[2]), dtype=x.dtype)
        for gi in range(len(cells)):
            s, e = starts[gi], starts[gi + 1]
            c = cells[gi]
            dparams[c] = go[s:e].T @ xo[s:e]
            dxo[s:e] = go[s:e] @ pd[c]
        dx = np.empty_like(dxo)
        dx[order] = dxo
        return dparams, dx

    record((params, x), out, vjp)
    return out


def assert_finite(a, name: str = "tensor"):
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise FloatingPointError(f"non-finite values in {name}")
    return a
