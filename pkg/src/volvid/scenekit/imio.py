"""8-bit PNG io (images in float [0,1], masks in the alpha channel)."""

import numpy as np
from PIL import Image


def save_png(path, rgb: np.ndarray, alpha: np.ndarray = None):
    """rgb [H,W,3] float in [0,1]; alpha [H,W] float in [0,1] optional."""
    arr = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if alpha is not None:
        a = np.round(np.clip(alpha, 0.0, 1.0) * 255.0).astype(np.uint8)
        u8 = np.concatenate([u8, a[:, :, None]], axis=2)
        Image.fromarray(u8, mode="RGBA").save(path)
    else:
        Image.fromarray(u8, mode="RGB").save(path)


def load_png(path):
    """Returns (rgb [H,W,3] float32, alpha [H,W] float32 or None)."""
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    rgb = arr[:, :, :3].astype(np.float32) / 255.0
    alpha = arr[:, :, 3].astype(np.float32) / 255.0 if arr.shape[2] == 4 else None
    return rgb, alpha
