"""Point and direction encodings.

gamma_p(p) = projector(hash features) + tri-plane sample, a 32-vector at the
default config. gamma_d(d) is the 15-dim raw+sin/cos direction encoding. All
batch entry points accept [N,...] arrays; single-point wrappers reshape.
"""

import warnings

import numpy as np

from .config import ModelConfig
from .diff import Tensor, ops
from .diff.dtypes import default_dtype

# orthographic projections: plane tag -> the two position axes forming (u, v)
PLANE_AXES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
PLANE_ORDER = ("xy", "xz", "yz")


def level_resolutions(n_min: int, n_max: int, levels: int) -> np.ndarray:
    """Geometric progression of per-level grid resolutions, shape [L, 3].

    The time axis shares the spatial schedule (it enters the hash lattice
    symmetrically with u and v).
    """
    if levels == 1:
        res = np.array([n_min], dtype=np.int64)
    else:
        b = (n_max / n_min) ** (1.0 / (levels - 1))
        res = np.round(n_min * b ** np.arange(levels)).astype(np.int64)
    return np.ascontiguousarray(np.repeat(res[:, None], 3, axis=1))


class HashTableSet:
    """Three multi-level spatio-temporal hash tables (one per plane).

    Each table is a learnable Tensor of shape [L*T, F], level-major. Slot
    count T is 2**log2_size per level.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, init_scale: float = 1e-4):
        self.levels = cfg.hash_levels
        self.table_size = cfg.table_size
        self.feat = cfg.hash_feat
        self.resolutions = level_resolutions(cfg.hash_nmin, cfg.hash_nmax, cfg.hash_levels)
        dt = default_dtype()
        shape = (self.levels * self.table_size, self.feat)
        self.tables = {
            tag: Tensor(
                rng.uniform(-init_scale, init_scale, size=shape).astype(dt),
                requires_grad=True,
            )
            for tag in PLANE_ORDER
        }

    @property
    def out_dim(self):
        return self.levels * self.feat

    def named_parameters(self):
        return {f"hash.{tag}": t for tag, t in self.tables.items()}


def _plane_uvt(pts: np.ndarray, t, tag: str) -> np.ndarray:
    a, b = PLANE_AXES[tag]
    n = pts.shape[0]
    uvt = np.empty((n, 3), dtype=pts.dtype)
    uvt[:, 0] = pts[:, a]
    uvt[:, 1] = pts[:, b]
    uvt[:, 2] = t
    np.clip(uvt, 0.0, 1.0, out=uvt)
    return np.ascontiguousarray(uvt)


def hash_encode(tables: HashTableSet, pts, t):
    """Sum of the three per-plane multi-level lookups.

    pts: [N,3] or [3] in the unit cube (clamped); t scalar or [N] in [0,1].
    Returns a Tensor [N, L*F] (or [L*F] for a single point).
    """
    p = np.asarray(pts, dtype=default_dtype())
    single = p.ndim == 1
    if single:
        p = p[None, :]
    out = None
    for tag in PLANE_ORDER:
        uvt = _plane_uvt(p, t, tag)
        part = ops.hash_gather(tables.tables[tag], uvt, tables.resolutions, tables.table_size)
        out = part if out is None else ops.add(out, part)
    return ops.reshape(out, (tables.out_dim,)) if single else out


class TriPlaneFeatures:
    """Three C-channel feature planes as one Tensor [3, C, R, R].

    Plane order follows PLANE_ORDER; axis 2 of each plane indexes v, axis 3
    indexes u (image convention: row = second projected coordinate).
    """

    def __init__(self, planes: Tensor):
        if planes.ndim != 4 or planes.shape[0] != 3 or planes.shape[2] != planes.shape[3]:
            raise ValueError(f"expected [3, C, R, R] planes, got {planes.shape}")
        self.planes = planes

    @property
    def channels(self):
        return self.planes.shape[1]

    @property
    def resolution(self):
        return self.planes.shape[2]

    @classmethod
    def constant(cls, value: float, channels: int, resolution: int):
        data = np.full((3, channels, resolution, resolution), value, dtype=default_dtype())
        return cls(Tensor(data))


def _bilinear_corners(u: np.ndarray, v: np.ndarray, r: int):
    """Texel-center aligned bilinear footprint on an r x r grid.

    Returns flat indices [N,4] (v-major: idx = iv*r + iu) and weights [N,4].
    """
    su = np.clip(u * r - 0.5, 0.0, r - 1.0)
    sv = np.clip(v * r - 0.5, 0.0, r - 1.0)
    iu0 = np.minimum(np.floor(su).astype(np.int64), r - 2) if r > 1 else np.zeros(len(su), np.int64)
    iv0 = np.minimum(np.floor(sv).astype(np.int64), r - 2) if r > 1 else np.zeros(len(sv), np.int64)
    fu = (su - iu0).astype(u.dtype)
    fv = (sv - iv0).astype(v.dtype)
    iu1 = np.minimum(iu0 + 1, r - 1)
    iv1 = np.minimum(iv0 + 1, r - 1)
    idx = np.stack(
        [iv0 * r + iu0, iv0 * r + iu1, iv1 * r + iu0, iv1 * r + iu1], axis=1
    )
    w = np.stack(
        [(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv], axis=1
    )
    return np.ascontiguousarray(idx), np.ascontiguousarray(w)


def triplane_sample(planes: TriPlaneFeatures, pts):
    """Bilinear sample of each plane at the point's projection, summed.

    pts: [N,3] or [3] in the unit cube (clamped). Returns Tensor [N, C].
    """
    p = np.asarray(pts, dtype=default_dtype())
    single = p.ndim == 1
    if single:
        p = p[None, :]
    p = np.clip(p, 0.0, 1.0)
    c = planes.channels
    r = planes.resolution
    out = None
    for k, tag in enumerate(PLANE_ORDER):
        a, b = PLANE_AXES[tag]
        idx, w = _bilinear_corners(p[:, a], p[:, b], r)
        # [C,R,R] -> table [R*R, C] for the fused gather
        tbl = ops.transpose(ops.reshape(planes.planes[k], (c, r * r)), (1, 0))
        part = ops.interp_gather(tbl, idx, w)
        out = part if out is None else ops.add(out, part)
    return ops.reshape(out, (c,)) if single else out


class FeatureProjector:
    """Learnable bias-free linear map from the hash feature to feature_dim."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        in_dim = cfg.hash_dim
        bound = np.sqrt(6.0 / in_dim)
        self.weight = Tensor(
            rng.uniform(-bound, bound, size=(in_dim, cfg.feature_dim)).astype(default_dtype()),
            requires_grad=True,
        )

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def __call__(self, feats: Tensor) -> Tensor:
        return ops.matmul(feats, self.weight)

    def named_parameters(self):
        return {"projector.weight": self.weight}


def point_embed(tables: HashTableSet, projector: FeatureProjector, planes: TriPlaneFeatures, pts, t):
    """gamma_p: projected hash feature plus tri-plane feature, [N, feature_dim]."""
    p = np.asarray(pts, dtype=default_dtype())
    single = p.ndim == 1
    if single:
        p = p[None, :]
    h = projector(hash_encode(tables, p, t))
    tp = triplane_sample(planes, p)
    out = ops.add(h, tp)
    return ops.reshape(out, (projector.out_dim,)) if single else out


def dir_encode(d, freqs: int = 2) -> np.ndarray:
    """gamma_d: [d, sin(2^f pi d), cos(2^f pi d)] for f in 0..freqs-1.

    Expects unit directions; non-unit inputs are normalized with a warning.
    Not learnable, so this returns a plain array.
    """
    v = np.asarray(d, dtype=default_dtype())
    single = v.ndim == 1
    if single:
        v = v[None, :]
    norms = np.linalg.norm(v, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        warnings.warn("dir_encode: normalizing non-unit directions", stacklevel=2)
        v = v / np.maximum(norms[:, None], 1e-12)
    parts = [v]
    for f in range(freqs):
        arg = (2.0**f) * np.pi * v
        parts.append(np.sin(arg).astype(v.dtype))
        parts.append(np.cos(arg).astype(v.dtype))
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out
