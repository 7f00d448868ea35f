"""Kernel backend selection.

The compiled extension (volvid._native) and the numpy fallback
(volvid._kernels_py) expose identical functions. We pick the extension when
it imported cleanly, unless VOLVID_BACKEND forces a choice. The benchmark
CLI flips backends at runtime via set_backend.
"""

import os

from . import _kernels_py

_IMPLS = {"python": _kernels_py}

try:
    from . import _native

    _IMPLS["native"] = _native
except ImportError:
    _native = None

_FORCED = os.environ.get("VOLVID_BACKEND", "").strip().lower()
if _FORCED and _FORCED not in ("python", "native"):
    raise RuntimeError(f"VOLVID_BACKEND must be 'python' or 'native', got {_FORCED!r}")
if _FORCED == "native" and "native" not in _IMPLS:
    raise RuntimeError("VOLVID_BACKEND=native but the compiled extension is unavailable")

_active_name = _FORCED or ("native" if "native" in _IMPLS else "python")
_active = _IMPLS[_active_name]


def backend_name():
    return _active_name


def available_backends():
    return sorted(_IMPLS)


def set_backend(name):
    """Switch kernels at runtime; returns the previous backend name."""
    global _active, _active_name
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    prev = _active_name
    _active_name = name
    _active = _IMPLS[name]
    return prev


def interp_gather_fwd(table, idx, w):
    return _active.interp_gather_fwd(table, idx, w)


def interp_gather_bwd(gout, idx, w, table_shape):
    return _active.interp_gather_bwd(gout, idx, w, table_shape)


def hash_gather_fwd(table, uvt, resolutions, table_size):
    return _active.hash_gather_fwd(table, uvt, resolutions, table_size)


def hash_gather_bwd(gout, uvt, resolutions, table_size, table_shape):
    return _active.hash_gather_bwd(gout, uvt, resolutions, table_size, table_shape)


def composite_scan(sigma, delta, offsets):
    return _active.composite_scan(sigma, delta, offsets)


def march_occupancy(ou, du, near, far, step, occ_bytes, nx, ny, nz):
    return _active.march_occupancy(ou, du, near, far, step, occ_bytes, nx, ny, nz)
