"""Rays, sampling, and the volume-rendering integral.

Training path: regular [R, S] sample grids, differentiable compositing via
diff ops. Inference path: ragged occupancy-filtered marches composited by the
backend scan kernel. Both implement C = sum_i T_i (1 - exp(-sigma_i d_i)) c_i.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backend
from .diff import ShapeError, Tensor, ops
from .diff.dtypes import default_dtype


@dataclass(frozen=True)
class SceneBounds:
    bmin: np.ndarray
    bmax: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bmin", np.asarray(self.bmin, dtype=np.float64))
        object.__setattr__(self, "bmax", np.asarray(self.bmax, dtype=np.float64))
        if not np.all(self.bmin < self.bmax):
            raise ValueError("bounds min must be strictly below max componentwise")

    @property
    def extent(self):
        return self.bmax - self.bmin

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def center(self):
        return 0.5 * (self.bmin + self.bmax)

    def to_unit(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.bmin) / self.extent

    def to_dict(self):
        return {"min": self.bmin.tolist(), "max": self.bmax.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"]), np.asarray(d["max"]))


@dataclass
class Camera:
    """Pinhole camera; rot/trans are world-from-camera (origin = trans)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rot: np.ndarray  # [3,3]
    trans: np.ndarray  # [3]
    width: int
    height: int

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("degenerate intrinsics: fx, fy must be positive")
        if np.abs(self.rot @ self.rot.T - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal within 1e-6")

    @classmethod
    def look_at(cls, position, target, up, fx, fy, width, height, cx=None, cy=None):
        position = np.asarray(position, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - position
        fwd = fwd / np.linalg.norm(fwd)
        up = np.asarray(up, dtype=np.float64)
        right = np.cross(fwd, up)
        nr = np.linalg.norm(right)
        if nr < 1e-9:
            raise ValueError("up is parallel to the view direction")
        right /= nr
        down = np.cross(fwd, right)
        # camera axes: +x right, +y down, +z forward
        rot = np.stack([right, down, fwd], axis=1)
        return cls(
            fx=fx, fy=fy,
            cx=width / 2.0 if cx is None else cx,
            cy=height / 2.0 if cy is None else cy,
            rot=rot, trans=position, width=width, height=height,
        )


@dataclass
class RayBundle:
    origins: np.ndarray  # [N,3]
    dirs: np.ndarray  # [N,3] unit
    near: np.ndarray  # [N]
    far: np.ndarray  # [N]
    hit: np.ndarray  # [N] bool

    def __len__(self):
        return len(self.origins)

    def select(self, mask):
        return RayBundle(
            self.origins[mask], self.dirs[mask], self.near[mask], self.far[mask], self.hit[mask]
        )


# single-ray convenience record (tests/oracles)
@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float
    hit: bool


def slab_intersect(origins, dirs, bounds: SceneBounds):
    """Near/far ray parameters against the axis-aligned box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (bounds.bmin - origins) * inv
        t1 = (bounds.bmax - origins) * inv
    lo = np.fmin(t0, t1)
    hi = np.fmax(t0, t1)
    # axes with zero direction: inside slab -> (-inf, inf), outside -> miss
    par = np.abs(dirs) < 1e-12
    if np.any(par):
        inside = (origins >= bounds.bmin) & (origins <= bounds.bmax)
        lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    tn = lo.max(axis=-1)
    tf = hi.min(axis=-1)
    hit = (tf >= np.maximum(tn, 0.0)) & np.isfinite(tf)
    near = np.where(hit, np.maximum(tn, 0.0), 0.0)
    far = np.where(hit, tf, 0.0)
    return near, far, hit


def gen_rays(cam: Camera, pixels, bounds: SceneBounds) -> RayBundle:
    """One ray per (px, py) pixel center; near/far from the bounds slab test."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim != 2 or px.shape[1] != 2:
        raise ShapeError(f"pixels must be [N,2], got {px.shape}")
    d_cam = np.stack(
        [
            (px[:, 0] - cam.cx) / cam.fx,
            (px[:, 1] - cam.cy) / cam.fy,
            np.ones(len(px)),
        ],
        axis=1,
    )
    d_world = d_cam @ cam.rot.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(cam.trans, d_world.shape).copy()
    near, far, hit = slab_intersect(origins, d_world, bounds)
    return RayBundle(origins, d_world, near, far, hit)


def full_image_pixels(width: int, height: int) -> np.ndarray:
    """All pixel coords in row-major (y, x) scan order, shape [H*W, 2]."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)


def sample_train(rays: RayBundle, n_samples: int = 64, rng: Optional[np.random.Generator] = None):
    """Stratified-uniform samples over [near, far] for hit rays.

    rng=None uses the deterministic bin starts (t_i = near + i*span/S), so
    sum(delta) == far - near exactly. Returns (positions [R,S,3], deltas
    [R,S], ts [R,S]).
    """
    if not np.all(rays.hit):
        raise ValueError("sample_train expects hit rays only (filter first)")
    r = len(rays)
    span = (rays.far - rays.near)[:, None]
    if rng is None:
        u = np.zeros((r, n_samples))
    else:
        u = rng.random((r, n_samples))
    ts = rays.near[:, None] + (np.arange(n_samples)[None, :] + u) * (span / n_samples)
    deltas = np.diff(ts, axis=1, append=rays.far[:, None])
    pos = rays.origins[:, None, :] + ts[:, :, None] * rays.dirs[:, None, :]
    dt = default_dtype()
    return pos.astype(dt), deltas.astype(dt), ts.astype(dt)


def sample_infer(rays: RayBundle, bounds: SceneBounds, occ, step: float):
    """Fixed-step march keeping samples in occupied voxels.

    occ: an OccupancyVolume, or None to keep every sample (ESS off).
    Returns (t_flat, delta_flat, offsets): ragged per-ray sample depths and
    widths. Each ray marches at span/ceil(span/step), never coarser than
    `step`, so its midpoint samples tile the chord exactly.
    """
    dt = default_dtype()
    ou = bounds.to_unit(rays.origins).astype(dt)
    du = (rays.dirs / bounds.extent).astype(dt)
    near = np.where(rays.hit, rays.near, 0.0).astype(dt)
    far = np.where(rays.hit, rays.far, 0.0).astype(dt)
    if occ is None:
        nx, ny, nz = 1, 1, 1
        bits = np.array([0xFF], dtype=np.uint8)
    else:
        nx, ny, nz = occ.resolution
        bits = occ.bits
    return backend.march_occupancy(ou, du, near, far, float(step), bits, nx, ny, nz)


def composite(sigma, rgb, delta):
    """Single-ray reference compositor (plain numpy).

    Returns (color [3], weights [M], opacity). Raises on negative sigma or
    delta.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if sigma.shape != delta.shape or rgb.shape != sigma.shape + (3,):
        raise ShapeError("composite: mismatched sample arrays")
    if np.any(sigma < 0) or np.any(delta < 0):
        raise ValueError("composite: negative sigma or delta")
    sd = sigma * delta
    trans = np.exp(-(np.cumsum(sd) - sd))
    w = trans * (1.0 - np.exp(-sd))
    return (w[:, None] * rgb).sum(axis=0), w, float(w.sum())


def composite_batch(sigma: Tensor, rgb: Tensor, deltas: np.ndarray):
    """Differentiable compositing on a regular [R, S] grid.

    Returns (color Tensor [R,3], opacity Tensor [R], weights Tensor [R,S]).
    """
    r, s = sigma.shape
    d = Tensor(np.asarray(deltas, dtype=sigma.dtype))
    sd = ops.mul(sigma, d)
    excl = ops.sub(ops.cumsum(sd, axis=1), sd)
    trans = ops.exp(ops.scale(excl, -1.0))
    alpha = ops.sub(Tensor(np.ones((), dtype=sigma.dtype)), ops.exp(ops.scale(sd, -1.0)))
    w = ops.mul(trans, alpha)
    color = ops.sum(ops.mul(ops.reshape(w, (r, s, 1)), rgb), axis=1)
    opacity = ops.sum(w, axis=1)
    return color, opacity, w


def composite_ragged(sigma: np.ndarray, rgb: np.ndarray, delta, offsets: np.ndarray):
    """Inference compositing over ragged per-ray segments (backend scan)."""
    m = len(sigma)
    if np.ndim(delta) == 0:
        delta = np.full(m, float(delta), dtype=sigma.dtype)
    else:
        # the fused-type scan kernel needs one floating type across buffers
        delta = np.asarray(delta, dtype=sigma.dtype)
    w, trans = backend.composite_scan(sigma, delta, offsets.astype(np.int64))
    n_rays = len(offsets) - 1
    ray_of = np.repeat(np.arange(n_rays), np.diff(offsets))
    color = np.zeros((n_rays, 3), dtype=sigma.dtype)
    if m:
        wc = w[:, None] * rgb
        for c in range(3):
            color[:, c] = np.bincount(ray_of, weights=wc[:, c], minlength=n_rays)
    opacity = np.bincount(ray_of, weights=w, minlength=n_rays) if m else np.zeros(n_rays, sigma.dtype)
    return color, opacity.astype(sigma.dtype), w


@dataclass
class RenderOptions:
    use_ess: bool = True
    two_stage: bool = True
    tau2: float = 1e-3
    background: tuple = (0.0, 0.0, 0.0)
    tile: int = 64
    occ: object = None  # OccupancyVolume, required when use_ess

    def replace(self, **kw):
        return replace(self, **kw)


def render_image(model, frame: int, cam: Camera, options: RenderOptions = None, mset=None):
    """Full-image inference render; returns (image [H,W,3], opacity [H,W])."""
    options = options or RenderOptions()
    if options.use_ess and options.occ is None:
        raise ValueError("use_ess requires options.occ (build the occupancy volume first)")
    if mset is None:
        mset = model.decode_frame_cached(frame)
    bounds = model.bounds
    t = model.time_of(frame)
    step = bounds.diagonal / model.cfg.infer_step_divisor
    occ = options.occ if options.use_ess else None

    h, w = cam.height, cam.width
    dt = default_dtype()
    image = np.zeros((h * w, 3), dtype=dt)
    opacity = np.zeros(h * w, dtype=dt)
    bg = np.asarray(options.background, dtype=dt)

    tile = max(1, int(options.tile))
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            ys, xs = np.mgrid[y0 : min(y0 + tile, h), x0 : min(x0 + tile, w)]
            pix_idx = (ys * w + xs).ravel()
            pixels = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
            rays = gen_rays(cam, pixels, bounds)
            col, opa = _render_rays_infer(model, mset, rays, t, step, occ, options)
            image[pix_idx] = col
            opacity[pix_idx] = opa

    image = image + (1.0 - opacity)[:, None] * bg
    return np.clip(image.reshape(h, w, 3), 0.0, 1.0), opacity.reshape(h, w)


def _render_rays_infer(model, mset, rays: RayBundle, t, step, occ, options: RenderOptions):
    n = len(rays)
    dt = default_dtype()
    color_out = np.zeros((n, 3), dtype=dt)
    opacity_out = np.zeros(n, dtype=dt)
    if not np.any(rays.hit):
        return color_out, opacity_out
    t_flat, delta_flat, offsets = sample_infer(rays, model.bounds, occ, step)
    m = len(t_flat)
    if m == 0:
        return color_out, opacity_out
    ray_of = np.repeat(np.arange(n), np.diff(offsets))
    pts = rays.origins[ray_of] + t_flat[:, None] * rays.dirs[ray_of]
    pts_unit = model.bounds.to_unit(pts).astype(dt)

    sigma, _ = model.density(mset, pts_unit, t)
    sigma = sigma.data
    # delta must match sigma's dtype: the compiled scan kernel takes one
    # floating type for both buffers (a float64-parameter model stays float64)
    delta = delta_flat.astype(sigma.dtype, copy=False)
    w, _ = backend.composite_scan(sigma, delta, offsets.astype(np.int64))

    if options.two_stage:
        sel = w > options.tau2
    else:
        sel = np.ones(m, dtype=bool)
    if np.any(sel):
        dirs_sel = rays.dirs[ray_of[sel]].astype(dt)
        rgb_sel = model.color(mset, pts_unit[sel], dirs_sel, t).data
        wc = w[sel][:, None] * rgb_sel
        rid = ray_of[sel]
        for c in range(3):
            color_out[:, c] = np.bincount(rid, weights=wc[:, c], minlength=n)
    opacity_out[:] = np.bincount(ray_of, weights=w, minlength=n)
    return color_out, opacity_out.astype(dt)


def render_rays_train(model, mset, rays: RayBundle, t, rng=None, n_samples=None):
    """Differentiable render of a ray batch (training path).

    Returns (color Tensor [R,3], opacity Tensor [R]).
    """
    n_samples = n_samples or model.cfg.train_samples
    pos, deltas, _ = sample_train(rays, n_samples=n_samples, rng=rng)
    r, s = deltas.shape
    pts = model.bounds.to_unit(pos.reshape(-1, 3)).astype(default_dtype())
    dirs = np.repeat(rays.dirs, s, axis=0).astype(default_dtype())
    sigma_flat, rgb_flat = model.radiance(mset, pts, dirs, t)
    sigma = ops.reshape(sigma_flat, (r, s))
    rgb = ops.reshape(rgb_flat, (r, s, 3))
    color, opacity, _ = composite_batch(sigma, rgb, deltas)
    return color, opacity


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(data_range * data_range / mse)
