"""im2col-based 2D convolution / transposed convolution primitives.

Everything here is plain numpy on CHW arrays (no batch axis; the decoder
processes one frame at a time). Convolution means cross-correlation, the
usual deep-learning convention.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError


def conv_out_extent(h: int, k: int, stride: int, padding: int) -> int:
    return (h + 2 * padding - k) // stride + 1


def deconv_out_extent(h: int, k: int, stride: int, padding: int) -> int:
    return (h - 1) * stride - 2 * padding + k


def im2col(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """x [C,H,W] -> columns [C*k*k, Ho*Wo]."""
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    c, hp, wp = x.shape
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    s0, s1, s2 = x.strides
    win = as_strided(x, (c, k, k, ho, wo), (s0, s1, s2, s1 * stride, s2 * stride))
    return win.reshape(c * k * k, ho * wo)


def col2im(cols: np.ndarray, out_shape, k: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add columns back into a [C,H,W] array."""
    c, h, w = out_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    buf = np.zeros((c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            buf[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, i, j]
    if padding:
        buf = buf[:, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(buf)


def check_conv_geometry(x_shape, w_shape, stride, padding):
    if stride < 1 or padding < 0:
        raise ShapeError(f"bad stride/padding ({stride}, {padding})")
    cin, h, w = x_shape
    if w_shape[1] != cin:
        raise ShapeError(f"kernel expects {w_shape[1]} input channels, input has {cin}")
    k = w_shape[2]
    if w_shape[3] != k:
        raise ShapeError("only square kernels are supported")
    ho = conv_out_extent(h, k, stride, padding)
    wo = conv_out_extent(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv output extent {ho}x{wo} < 1 for input {h}x{w}, k={k}")
    return ho, wo


def conv2d_forward(x, w, stride, padding):
    cout = w.shape[0]
    ho, wo = check_conv_geometry(x.shape, w.shape, stride, padding)
    cols = im2col(x, w.shape[2], stride, padding)
    out = w.reshape(cout, -1) @ cols
    return out.reshape(cout, ho, wo)


def conv2d_grad_input(gout, w, stride, padding, x_shape):
    k = w.shape[2]
    cout = w.shape[0]
    dcols = w.reshape(cout, -1).T @ gout.reshape(cout, -1)
    return col2im(dcols, x_shape, k, stride, padding)


def conv2d_grad_kernel(gout, x, k, stride, padding, w_shape):
    cout = gout.shape[0]
    cols = im2col(x, k, stride, padding)
    dw = gout.reshape(cout, -1) @ cols.T
    return dw.reshape(w_shape)


def check_deconv_geometry(x_shape, w_shape, stride, padding):
    if stride < 1 or padding < 0:
        raise ShapeError(f"bad stride/padding ({stride}, {padding})")
    cin, h, w = x_shape
    if w_shape[0] != cin:
        raise ShapeError(f"kernel expects {w_shape[0]} input channels, input has {cin}")
    k = w_shape[2]
    if w_shape[3] != k:
        raise ShapeError("only square kernels are supported")
    ho = deconv_out_extent(h, k, stride, padding)
    wo = deconv_out_extent(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"deconv output extent {ho}x{wo} < 1")
    # the adjoint conv must map the output extents back exactly
    if conv_out_extent(ho, k, stride, padding) != h or conv_out_extent(wo, k, stride, padding) != w:
        raise ShapeError(f"deconv geometry (k={k}, s={stride}, p={padding}) is not invertible")
    return ho, wo


def deconv2d_forward(x, w, stride, padding):
    """Transposed conv; kernel layout [C_in, C_out, k, k]."""
    cin, cout, k, _ = w.shape
    ho, wo = check_deconv_geometry(x.shape, w.shape, stride, padding)
    cols = w.reshape(cin, -1).T @ x.reshape(cin, -1)
    return col2im(cols, (cout, ho, wo), k, stride, padding)


def deconv2d_grad_input(gout, w, stride, padding):
    # adjoint of the scatter: an ordinary conv of gout with w read as
    # a [C_in-out, C_out-in, k, k] kernel
    cin, _, k, _ = w.shape
    cols = im2col(gout, k, stride, padding)
    hi = conv_out_extent(gout.shape[1], k, stride, padding)
    wi = conv_out_extent(gout.shape[2], k, stride, padding)
    return (w.reshape(cin, -1) @ cols).reshape(cin, hi, wi)


def deconv2d_grad_kernel(gout, x, k, stride, padding, w_shape):
    cin = x.shape[0]
    cols = im2col(gout, k, stride, padding)
    dw = x.reshape(cin, -1) @ cols.T
    return dw.reshape(w_shape)
