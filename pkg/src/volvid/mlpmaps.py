"""MLP maps: 2D grids of tiny-MLP parameter vectors plus their evaluation.

A 3D point picks one cell per plane by orthographic projection and spatial
binning; the cell's parameter vector is a bias-free MLP. Density is a single
feature_dim->1 layer; color is a three-layer head consuming gamma_p and the
direction encoding. Outputs from the planes are aggregated by summing the
pre-activation values, then one softplus (density) / sigmoid (color).

eval_density / eval_color are the single-point reference path (plain numpy,
no graph); batched_eval is the grouped, differentiable kernel used by the
trainer and renderer.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ModelConfig
from .diff import Tensor, ops
from .diff.dtypes import default_dtype
from .encodings import PLANE_AXES, TriPlaneFeatures


@dataclass(frozen=True)
class Grouping:
    """Sorted-by-cell view of a point batch (consumed by ops.cellwise_linear)."""

    order: np.ndarray  # [N] permutation: batch indices sorted by cell
    starts: np.ndarray  # [G+1] segment boundaries into order
    cells: np.ndarray  # [G] flat cell index per segment


class MlpMap:
    """One plane's grid of per-cell MLP parameter vectors.

    grid is a Tensor [R*R, P]; flat cell index = j*R + i with i = bin(u),
    j = bin(v) (v-major, matching the decoder's [P, H=v, W=u] head output).
    """

    def __init__(self, tag: str, resolution: int, param_len: int, grid: Tensor):
        if tag not in PLANE_AXES:
            raise ValueError(f"unknown plane tag {tag!r}")
        if grid.shape != (resolution * resolution, param_len):
            raise ValueError(
                f"grid shape {grid.shape} != ({resolution * resolution}, {param_len})"
            )
        self.tag = tag
        self.resolution = resolution
        self.param_len = param_len
        self.grid = grid

    @classmethod
    def from_decoder(cls, tag: str, maps: Tensor):
        """maps: [P, R, R] head output slice for this plane."""
        p, r, r2 = maps.shape
        assert r == r2
        grid = ops.transpose(ops.reshape(maps, (p, r * r)), (1, 0))
        return cls(tag, r, p, grid)

    @classmethod
    def zeros(cls, tag: str, resolution: int, param_len: int):
        data = np.zeros((resolution * resolution, param_len), dtype=default_dtype())
        return cls(tag, resolution, param_len, Tensor(data))

    def cell(self, i: int, j: int) -> np.ndarray:
        return self.grid.data[j * self.resolution + i]

    def storage_count(self) -> int:
        return self.resolution * self.resolution * self.param_len


@dataclass
class MlpMapSet:
    """One frame's radiance field: density + color maps per plane + tri-planes."""

    density: dict  # tag -> MlpMap
    color: dict  # tag -> MlpMap
    triplane: TriPlaneFeatures
    frame: int

    def __post_init__(self):
        if set(self.density) != set(self.color):
            raise ValueError("density/color plane tags differ")
        for maps in (self.density, self.color):
            for tag, m in maps.items():
                if m.tag != tag:
                    raise ValueError(f"map tagged {m.tag!r} stored under {tag!r}")

    @property
    def tags(self):
        return tuple(self.density)


@dataclass
class PointBatch:
    positions: np.ndarray  # [N,3] unit-cube
    dirs: Optional[np.ndarray]  # [N,3] unit vectors, or None for density-only
    times: np.ndarray  # [N] normalized time

    def __post_init__(self):
        n = len(self.positions)
        if self.dirs is not None and len(self.dirs) != n:
            raise ValueError("positions/dirs length mismatch")
        if np.ndim(self.times) == 0:
            self.times = np.full(n, float(self.times), dtype=np.asarray(self.positions).dtype)
        if len(self.times) != n:
            raise ValueError("positions/times length mismatch")

    def __len__(self):
        return len(self.positions)


def bin_indices(tag: str, resolution: int, pts: np.ndarray):
    """Vectorized spatial binning: returns (i, j) arrays for [N,3] points."""
    a, b = PLANE_AXES[tag]
    u = np.clip(pts[:, a], 0.0, 1.0)
    v = np.clip(pts[:, b], 0.0, 1.0)
    i = np.minimum((u * resolution).astype(np.int64), resolution - 1)
    j = np.minimum((v * resolution).astype(np.int64), resolution - 1)
    return i, j


def bin_lookup(mlp_map: MlpMap, p) -> tuple:
    """Cell (i, j) owning point p on this map's plane (half-open bins)."""
    i, j = bin_indices(mlp_map.tag, mlp_map.resolution, np.asarray(p, dtype=np.float64)[None, :])
    return int(i[0]), int(j[0])


def make_grouping(tag: str, resolution: int, pts: np.ndarray) -> Grouping:
    i, j = bin_indices(tag, resolution, pts)
    flat = j * resolution + i
    order = np.argsort(flat, kind="stable").astype(np.int64)
    sorted_flat = flat[order]
    cells, starts_idx = np.unique(sorted_flat, return_index=True)
    starts = np.concatenate([starts_idx, [len(order)]]).astype(np.int64)
    return Grouping(order=order, starts=starts, cells=cells.astype(np.int64))


def group_points(mlp_map: MlpMap, batch: PointBatch) -> dict:
    """Partition of batch indices keyed by (i, j) cell."""
    pts = np.asarray(batch.positions)
    if len(pts) == 0:
        return {}
    g = make_grouping(mlp_map.tag, mlp_map.resolution, pts)
    r = mlp_map.resolution
    out = {}
    for k, cell in enumerate(g.cells):
        i, j = int(cell % r), int(cell // r)
        out[(i, j)] = np.sort(g.order[g.starts[k] : g.starts[k + 1]])
    return out


def _split_color_params(params: np.ndarray, cfg_like):
    """Cell parameter vector -> (W1 [h,fd], W2 [h,h+dd], W3 [3,h])."""
    h, fd, dd = cfg_like
    n1 = h * fd
    n2 = h * (h + dd)
    w1 = params[:n1].reshape(h, fd)
    w2 = params[n1 : n1 + n2].reshape(h, h + dd)
    w3 = params[n1 + n2 :].reshape(3, h)
    return w1, w2, w3


def _color_dims(mset: MlpMapSet, gamma_p_len: int, gamma_d_len: int):
    some = next(iter(mset.color.values()))
    fd, dd = gamma_p_len, gamma_d_len
    # solve h from P = h*fd + h*(h+dd) + 3h
    p = some.param_len
    # h is a positive integer root of h^2 + (fd+dd+3)h - P = 0
    b = fd + dd + 3
    h = int(round((-b + np.sqrt(b * b + 4 * p)) / 2))
    if h * fd + h * (h + dd) + 3 * h != p:
        raise ValueError(f"color param length {p} inconsistent with dims fd={fd}, dd={dd}")
    return h, fd, dd


def eval_density(mset: MlpMapSet, gamma_p, p):
    """Single-point density: returns (sigma, raw_sum). Reference path."""
    g = np.asarray(gamma_p.data if isinstance(gamma_p, Tensor) else gamma_p, dtype=np.float64)
    s = 0.0
    for tag, m in mset.density.items():
        i, j = bin_lookup(m, p)
        s += float(np.dot(m.cell(i, j), g))
    return float(np.log1p(np.exp(-abs(s))) + max(s, 0.0)), float(s)


def eval_color(mset: MlpMapSet, gamma_p, gamma_d, p):
    """Single-point color in [0,1]^3. Reference path."""
    g = np.asarray(gamma_p.data if isinstance(gamma_p, Tensor) else gamma_p, dtype=np.float64)
    d = np.asarray(gamma_d, dtype=np.float64)
    dims = _color_dims(mset, len(g), len(d))
    logits = np.zeros(3)
    for tag, m in mset.color.items():
        i, j = bin_lookup(m, p)
        w1, w2, w3 = _split_color_params(m.cell(i, j).astype(np.float64), dims)
        h1 = np.maximum(w1 @ g, 0.0)
        h2 = np.maximum(w2 @ np.concatenate([h1, d]), 0.0)
        logits += w3 @ h2
    return 1.0 / (1.0 + np.exp(-logits))


def batched_eval(mset: MlpMapSet, batch: PointBatch, features, head: str):
    """Grouped evaluation over the whole batch, outputs in input order.

    features: gamma_p Tensor [N, fd] for head="density";
              (gamma_p, gamma_d [N, dd]) for head="color".
    Differentiable; returns (sigma, raw) Tensors or rgb Tensor.
    """
    pts = np.asarray(batch.positions)
    n = len(pts)
    if head == "density":
        gamma_p = features
        raw = None
        for tag, m in mset.density.items():
            i, j = bin_indices(tag, m.resolution, pts)
            flat = j * m.resolution + i
            w = ops.gather_rows(m.grid, flat)  # [N, fd]
            part = ops.sum(ops.mul(w, gamma_p), axis=1)
            raw = part if raw is None else ops.add(raw, part)
        return ops.softplus(raw), raw
    if head == "color":
        gamma_p, gamma_d = features
        gd = gamma_d if isinstance(gamma_d, Tensor) else Tensor(np.asarray(gamma_d, dtype=gamma_p.dtype))
        dims = _color_dims(mset, gamma_p.shape[1], gd.shape[1])
        h, fd, dd = dims
        n1, n2 = h * fd, h * (h + dd)
        logits = None
        for tag, m in mset.color.items():
            grouping = make_grouping(tag, m.resolution, pts)
            w1 = ops.reshape(ops.getitem(m.grid, (slice(None), slice(0, n1))), (-1, h, fd))
            w2 = ops.reshape(ops.getitem(m.grid, (slice(None), slice(n1, n1 + n2))), (-1, h, h + dd))
            w3 = ops.reshape(ops.getitem(m.grid, (slice(None), slice(n1 + n2, m.param_len))), (-1, 3, h))
            h1 = ops.relu(ops.cellwise_linear(w1, gamma_p, grouping))
            h2 = ops.relu(ops.cellwise_linear(w2, ops.concat([h1, gd], axis=1), grouping))
            part = ops.cellwise_linear(w3, h2, grouping)
            logits = part if logits is None else ops.add(logits, part)
        return ops.sigmoid(logits)
    raise ValueError(f"unknown head {head!r}")


def audit_param_counts(mset: MlpMapSet, cfg: ModelConfig) -> dict:
    """Recompute per-map storage and check against the config's cell sizes."""
    report = {}
    for kind, maps, res, plen in (
        ("density", mset.density, cfg.density_res, cfg.density_p),
        ("color", mset.color, cfg.color_res, cfg.color_p),
    ):
        for tag, m in maps.items():
            expect = res * res * plen
            got = m.storage_count()
            if (m.resolution, m.param_len) != (res, plen) or got != expect:
                raise AssertionError(
                    f"{kind}/{tag}: {m.resolution}^2 x {m.param_len} != {res}^2 x {plen}"
                )
            report[f"{kind}/{tag}"] = got
    return report
