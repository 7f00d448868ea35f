"""Synthetic multi-view scenes with an analytic brute-force render oracle.

The scene is a union of moving constant-density primitives (spheres, boxes).
oracle_render marches rays with a fine fixed step and the same compositing
formula as the engine, providing ground-truth images for training and an
independent check of the compositor.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..renderer import Camera, SceneBounds, slab_intersect
from .datasets import load_dataset, write_dataset
from .imio import save_png


@dataclass
class Primitive:
    kind: str  # "sphere" | "box"
    center: np.ndarray  # at t=0
    velocity: np.ndarray  # center drift per unit normalized time
    size: np.ndarray  # sphere: [radius]; box: [hx, hy, hz]
    sigma: float
    color: np.ndarray  # [3]

    def center_at(self, t: float) -> np.ndarray:
        return self.center + t * self.velocity

    def inside(self, pts: np.ndarray, t: float) -> np.ndarray:
        c = self.center_at(t)
        if self.kind == "sphere":
            return ((pts - c) ** 2).sum(axis=1) <= self.size[0] ** 2
        if self.kind == "box":
            return np.all(np.abs(pts - c) <= self.size, axis=1)
        raise ValueError(f"unknown primitive kind {self.kind!r}")


@dataclass
class SyntheticScene:
    bounds: SceneBounds
    primitives: list
    seed: int = 0
    view_tint: bool = False

    def sigma_at(self, pts: np.ndarray, t: float) -> np.ndarray:
        s = np.zeros(len(pts))
        for prim in self.primitives:
            s = np.maximum(s, np.where(prim.inside(pts, t), prim.sigma, 0.0))
        return s

    def color_at(self, pts: np.ndarray, t: float, dirs: Optional[np.ndarray] = None) -> np.ndarray:
        c = np.zeros((len(pts), 3))
        unclaimed = np.ones(len(pts), dtype=bool)
        for prim in self.primitives:
            m = prim.inside(pts, t) & unclaimed
            c[m] = prim.color
            unclaimed &= ~m
        if self.view_tint and dirs is not None:
            tint = 0.8 + 0.2 * dirs[:, 2:3]
            c = np.clip(c * tint, 0.0, 1.0)
        return c


def default_scene(seed: int = 0, n_primitives: int = 3, view_tint: bool = False) -> SyntheticScene:
    """Randomized moving primitives inside [-0.5, 0.5]^3, deterministic in seed."""
    rng = np.random.default_rng(seed)
    bounds = SceneBounds(np.array([-0.5, -0.5, -0.5]), np.array([0.5, 0.5, 0.5]))
    hues = np.array(
        [[0.9, 0.25, 0.2], [0.2, 0.5, 0.95], [0.35, 0.9, 0.4], [0.95, 0.85, 0.25], [0.75, 0.3, 0.9]]
    )
    prims = []
    for k in range(n_primitives):
        kind = "sphere" if (k % 3 != 2) else "box"
        center = rng.uniform(-0.22, 0.22, 3)
        vel = rng.uniform(-0.15, 0.15, 3)
        if kind == "sphere":
            size = np.array([rng.uniform(0.12, 0.18)])
        else:
            size = rng.uniform(0.08, 0.14, 3)
        color = hues[k % len(hues)] * rng.uniform(0.85, 1.0)
        prims.append(
            Primitive(kind=kind, center=center, velocity=vel, size=size, sigma=25.0, color=color)
        )
    return SyntheticScene(bounds=bounds, primitives=prims, seed=seed, view_tint=view_tint)


def ring_cameras(
    bounds: SceneBounds, n_cams: int, width: int, height: int, radius_factor: float = 2.4
):
    """Cameras on a ring around the scene center, alternating elevation."""
    center = bounds.center
    radius = radius_factor * 0.5 * bounds.diagonal
    cams = []
    for k in range(n_cams):
        az = 2.0 * np.pi * k / n_cams
        el = np.deg2rad(18.0 if k % 2 == 0 else -14.0)
        pos = center + radius * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
        )
        fx = 0.9 * width
        cams.append(
            Camera.look_at(pos, center, np.array([0.0, 0.0, 1.0]), fx, fx, width, height)
        )
    return cams


def oracle_render(scene: SyntheticScene, cam: Camera, t: float, n_steps: int = 1024, row_chunk: int = 16):
    """Brute-force fine-step render; returns (rgb [H,W,3], alpha [H,W])."""
    h, w = cam.height, cam.width
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    for y0 in range(0, h, row_chunk):
        y1 = min(y0 + row_chunk, h)
        ys, xs = np.mgrid[y0:y1, 0:w]
        px = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
        d_cam = np.stack(
            [(px[:, 0] - cam.cx) / cam.fx, (px[:, 1] - cam.cy) / cam.fy, np.ones(len(px))],
            axis=1,
        )
        dirs = d_cam @ cam.rot.T
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(cam.trans, dirs.shape)
        near, far, hit = slab_intersect(origins, dirs, scene.bounds)
        span = np.where(hit, far - near, 0.0)
        delta = span / n_steps  # [R]
        ks = np.arange(n_steps) + 0.5
        ts = near[:, None] + ks[None, :] * delta[:, None]  # [R,S]
        pts = origins[:, None, :] + ts[:, :, None] * dirs[:, None, :]
        flat = pts.reshape(-1, 3)
        sig = scene.sigma_at(flat, t).reshape(len(px), n_steps)
        col = scene.color_at(
            flat, t, np.repeat(dirs, n_steps, axis=0) if scene.view_tint else None
        ).reshape(len(px), n_steps, 3)
        sd = sig * delta[:, None]
        trans = np.exp(-(np.cumsum(sd, axis=1) - sd))
        wgt = trans * (1.0 - np.exp(-sd))
        rgb[y0:y1] = (wgt[:, :, None] * col).sum(axis=1).reshape(y1 - y0, w, 3)
        alpha[y0:y1] = wgt.sum(axis=1).reshape(y1 - y0, w)
    return rgb, alpha


def gen_synthetic(
    out_dir,
    n_frames: int = 3,
    n_cams: int = 12,
    resolution: int = 128,
    seed: int = 0,
    n_primitives: int = 3,
    view_tint: bool = False,
    oracle_steps: int = 1024,
):
    """Write a synthetic dataset (images + masks + manifest); returns Dataset."""
    if n_cams < 2:
        raise ValueError("need at least two cameras")
    if n_frames < 1 or resolution < 8:
        raise ValueError("degenerate synthetic spec")
    scene = default_scene(seed=seed, n_primitives=n_primitives, view_tint=view_tint)
    cams = ring_cameras(scene.bounds, n_cams, resolution, resolution)
    names = [f"cam{k:02d}" for k in range(n_cams)]
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    images = []
    for f in range(n_frames):
        t = f / (n_frames - 1) if n_frames > 1 else 0.0
        row = []
        for k, cam in enumerate(cams):
            rgb, alpha = oracle_render(scene, cam, t, n_steps=oracle_steps)
            rel = f"images/f{f:03d}_{names[k]}.png"
            save_png(os.path.join(out_dir, rel), rgb, alpha)
            row.append(rel)
        images.append(row)
    masks = [[None] * n_cams for _ in range(n_frames)]  # alpha-channel masks
    write_dataset(out_dir, scene.bounds, cams, names, images, masks=masks)
    return load_dataset(out_dir), scene
