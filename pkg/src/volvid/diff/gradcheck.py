"""Central finite-difference gradient checking (test oracle).

Run under float64 (see dtypes.using_dtype); float32 has nowhere near enough
headroom for h=1e-5 differencing.
"""

import numpy as np

from .tensor import Graph, Tensor, backward


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar-valued f with respect to array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def analytic_grads(build, params):
    """Run build() under a fresh graph and return each param's gradient."""
    for p in params:
        p.zero_grad()
    g = Graph()
    with g:
        loss = build()
    backward(g, loss)
    return [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    rel = np.abs(analytic - numeric) / denom
    # ignore entries where both sides are essentially zero
    rel[(np.abs(analytic) < 1e-7) & (np.abs(numeric) < 1e-7)] = 0.0
    return float(rel.max()) if rel.size else 0.0


def check_gradients(build, params, h: float = 1e-5) -> float:
    """Compare analytic and numeric grads of build() wrt each param tensor.

    build must construct the full forward pass from the params' current data
    and return a scalar Tensor. Returns the worst relative error found.
    """
    analytic = analytic_grads(build, params)

    def scalar():
        return float(build().data)

    worst = 0.0
    for p, a in zip(params, analytic):
        n = numeric_grad(scalar, p.data, h=h)
        worst = max(worst, max_rel_error(a, n))
    return worst


def make_param(rng: np.random.Generator, shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)
