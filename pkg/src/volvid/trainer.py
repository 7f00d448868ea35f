"""Optimization of latents, decoder, hash tables, and projector.

Loss per step: L = L_c + lam_kl * L_KL + lam_m * L_m where L_c/L_m are summed
squared pixel/mask residuals over the step's rays and L_KL = 0.5 * sum ||z||^2
over the latents of the step's frames. Group learning rates: decoder, latents
and projector share the base rate; hash tables run 10x hotter; both decay
continuously by 0.1 every decay_every epochs.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .diff import Graph, ShapeError, Tensor, backward, ops
from .renderer import gen_rays, render_rays_train

LR_GROUP_OF = {"decoder": "base", "latents": "base", "projector": "base", "hash": "hash"}


@dataclass
class LossReport:
    l_c: float
    l_kl: float
    l_m: float
    total: float
    ray_count: int
    epoch: int = -1
    lrs: dict = field(default_factory=dict)

    def check_identity(self, lam_kl: float, lam_m: float, tol: float = 1e-6):
        lhs = self.l_c + lam_kl * self.l_kl + lam_m * self.l_m
        if abs(lhs - self.total) > tol * max(1.0, abs(self.total)):
            raise AssertionError(f"loss decomposition broken: {lhs} != {self.total}")


def compute_loss(rendered, target, opacity, mask, z_batch, lam_kl: float = 1e-6, lam_m: float = 0.1):
    """Returns (total Tensor, LossReport). mask=None drops the mask term."""
    target = np.asarray(target, dtype=rendered.dtype)
    if rendered.shape != target.shape:
        raise ShapeError(f"rendered {rendered.shape} vs target {target.shape}")
    diff = ops.sub(rendered, Tensor(target))
    l_c = ops.sum(ops.mul(diff, diff))
    total = l_c
    l_m_val = 0.0
    if mask is not None:
        mask = np.asarray(mask, dtype=opacity.dtype)
        if opacity.shape != mask.shape:
            raise ShapeError(f"opacity {opacity.shape} vs mask {mask.shape}")
        mdiff = ops.sub(opacity, Tensor(mask))
        l_m = ops.sum(ops.mul(mdiff, mdiff))
        l_m_val = float(l_m.data)
        total = ops.add(total, ops.scale(l_m, lam_m))
    l_kl_val = 0.0
    if z_batch is not None:
        l_kl = ops.scale(ops.sum(ops.mul(z_batch, z_batch)), 0.5)
        l_kl_val = float(l_kl.data)
        total = ops.add(total, ops.scale(l_kl, lam_kl))
    report = LossReport(
        l_c=float(l_c.data), l_kl=l_kl_val, l_m=l_m_val, total=float(total.data),
        ray_count=int(rendered.shape[0]),
    )
    return total, report


class Adam:
    """Bias-corrected adaptive-moment optimizer over named parameter groups."""

    def __init__(self, named_params: dict, group_of: dict = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(named_params)
        self.group_of = group_of or {}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.skipped_steps = 0

    def _group(self, name: str) -> str:
        head = name.split(".", 1)[0]
        return self.group_of.get(head, "base")

    def step(self, lrs):
        """lrs: float (all groups) or dict group->rate.

        If any gradient is non-finite the whole step is skipped; returns the
        list of offending parameter names (empty on a normal step).
        """
        if not isinstance(lrs, dict):
            lrs = {g: float(lrs) for g in set(self._group(k) for k in self.params)}
        bad = [
            name
            for name, p in self.params.items()
            if p.grad is not None and not np.all(np.isfinite(p.grad))
        ]
        if bad:
            self.skipped_steps += 1
            return bad
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            lr = lrs[self._group(name)]
            p.data -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
        return []

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    steps_per_epoch: int = 50
    batch_images: int = 8
    rays_per_image: int = 512
    seed: int = 0
    lr_base: float = 5e-4
    lr_hash: float = 5e-3
    decay_factor: float = 0.1
    decay_every: int = 400
    lam_kl: float = 1e-6
    lam_m: float = 0.1
    out_dir: str = ""
    checkpoint_every: int = 0  # epochs; 0 = final only
    log_every: int = 1

    def lrs_at(self, epoch: float) -> dict:
        mult = self.decay_factor ** (epoch / self.decay_every)
        return {"base": self.lr_base * mult, "hash": self.lr_hash * mult}


def _sample_step_pixels(dataset, pairs, rays_per_image, rng):
    """For each (frame, cam) pair pick random pixels; returns per-frame work."""
    by_frame = {}
    for frame, cam in pairs:
        w, h = dataset.cameras[cam].width, dataset.cameras[cam].height
        px = rng.integers(0, w, size=rays_per_image)
        py = rng.integers(0, h, size=rays_per_image)
        rgb, mask = dataset.image(frame, cam)
        by_frame.setdefault(frame, []).append(
            (
                cam,
                np.stack([px, py], axis=1).astype(np.float64),
                rgb[py, px],
                mask[py, px] if mask is not None else None,
            )
        )
    return by_frame


def train_step(model, dataset, tcfg: TrainConfig, rng, epoch: int):
    """One optimization step; returns (LossReport, grad_norms dict)."""
    n_pairs = dataset.n_frames * dataset.n_cams
    flat = rng.integers(0, n_pairs, size=tcfg.batch_images)
    pairs = [(int(i) // dataset.n_cams, int(i) % dataset.n_cams) for i in flat]
    by_frame = _sample_step_pixels(dataset, pairs, tcfg.rays_per_image, rng)

    graph = Graph()
    with graph:
        rendered_all, opacity_all, targets, masks = [], [], [], []
        for frame, work in sorted(by_frame.items()):
            mset = model.decode_frame(frame)
            t = model.time_of(frame)
            for cam_idx, pixels, target_rgb, target_mask in work:
                rays = gen_rays(dataset.cameras[cam_idx], pixels, model.bounds)
                keep = rays.hit
                if not np.any(keep):
                    continue
                color, opacity = render_rays_train(model, mset, rays.select(keep), t, rng=rng)
                rendered_all.append(color)
                opacity_all.append(opacity)
                targets.append(np.asarray(target_rgb)[keep])
                if target_mask is not None:
                    masks.append(np.asarray(target_mask)[keep])
        if not rendered_all:
            raise RuntimeError("no rays hit the scene bounds; check cameras/bounds")
        rendered = ops.concat(rendered_all, axis=0)
        opacity = ops.concat(opacity_all, axis=0)
        target = np.concatenate(targets, axis=0)
        mask = np.concatenate(masks, axis=0) if len(masks) == len(opacity_all) else None
        z_batch = model.latents.rows(np.array(sorted(by_frame), dtype=np.int64))
        total, report = compute_loss(
            rendered, target, opacity, mask, z_batch, lam_kl=tcfg.lam_kl, lam_m=tcfg.lam_m
        )
    if not np.isfinite(report.total):
        parts = {"L_c": report.l_c, "L_KL": report.l_kl, "L_m": report.l_m}
        bad = [k for k, v in parts.items() if not np.isfinite(v)] or ["total"]
        raise RuntimeError(f"non-finite loss component(s) {bad} at epoch {epoch}")
    backward(graph, total)
    report.epoch = epoch
    report.lrs = tcfg.lrs_at(epoch)
    return report


def train(dataset, model, tcfg: TrainConfig):
    """Full optimization loop; returns the list of per-step LossReports.

    Writes loss_curve.csv and model.ckpt under tcfg.out_dir when set.
    """
    from .scenekit.ckpt import checkpoint_of, save_checkpoint

    rng = np.random.default_rng(tcfg.seed)
    adam = Adam(model.named_parameters(), LR_GROUP_OF)
    history = []
    curve_path = None
    writer = None
    fcsv = None
    if tcfg.out_dir:
        os.makedirs(tcfg.out_dir, exist_ok=True)
        curve_path = os.path.join(tcfg.out_dir, "loss_curve.csv")
        fcsv = open(curve_path, "w", newline="")
        writer = csv.writer(fcsv)
        writer.writerow(["epoch", "l_c", "l_kl", "l_m", "total", "lr"])
    try:
        for epoch in range(tcfg.epochs):
            lrs = tcfg.lrs_at(epoch)
            for _ in range(tcfg.steps_per_epoch):
                adam.zero_grad()
                report = train_step(model, dataset, tcfg, rng, epoch)
                bad = adam.step(lrs)
                if bad:
                    report.lrs = dict(report.lrs, skipped=1.0)
                history.append(report)
                if writer:
                    writer.writerow(
                        [epoch, report.l_c, report.l_kl, report.l_m, report.total, lrs["base"]]
                    )
            if writer:
                fcsv.flush()
            if (
                tcfg.out_dir
                and tcfg.checkpoint_every
                and (epoch + 1) % tcfg.checkpoint_every == 0
            ):
                save_checkpoint(
                    checkpoint_of(model, meta={"epoch": epoch + 1}),
                    os.path.join(tcfg.out_dir, f"epoch{epoch + 1:04d}.ckpt"),
                )
    finally:
        if fcsv:
            fcsv.close()
    model.invalidate_cache()
    if tcfg.out_dir:
        save_checkpoint(
            checkpoint_of(model, meta={"epochs": tcfg.epochs}),
            os.path.join(tcfg.out_dir, "model.ckpt"),
        )
    return history


def evaluate_lc(model, dataset, frame: int, cam: int, chunk: int = 4096) -> float:
    """Held-out color loss: sum ||C_hat - C||^2 over all hit pixels.

    Deterministic (stratified sampling with zero jitter); used by the
    plane-ablation trend check.
    """
    camera = dataset.cameras[cam]
    rgb_gt, _ = dataset.image(frame, cam)
    mset = model.decode_frame_cached(frame)
    t = model.time_of(frame)
    ys, xs = np.mgrid[0 : camera.height, 0 : camera.width]
    pixels = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    gt = rgb_gt.reshape(-1, 3)
    total = 0.0
    for s in range(0, len(pixels), chunk):
        rays = gen_rays(camera, pixels[s : s + chunk], model.bounds)
        keep = rays.hit
        if not np.any(keep):
            continue
        color, _ = render_rays_train(model, mset, rays.select(keep), t, rng=None)
        d = color.data - gt[s : s + chunk][keep]
        total += float((d * d).sum())
    return total
