"""Global float precision for the compute kernel.

Training and inference run in float32 by default; tests switch to float64
so finite-difference gradient checks have enough headroom.
"""

import threading
from contextlib import contextmanager

import numpy as np

_state = threading.local()


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


def set_default_dtype(dtype) -> None:
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    _state.dtype = dt


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the default dtype (e.g. float64 for grad checks)."""
    old = default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)
