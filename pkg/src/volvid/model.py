"""The full model bundle: decoder + latents + hash tables + projector.

Shared feature/density/color pipeline used by the trainer, the renderer, and
the occupancy builder. All point inputs here are unit-cube coordinates; the
renderer owns world-to-unit conversion via SceneBounds.
"""

import numpy as np

from .config import ModelConfig
from .diff import Tensor
from .encodings import FeatureProjector, HashTableSet, dir_encode, point_embed
from .hypernet import DecodeCache, DecoderWeights, LatentTable, decode
from .mlpmaps import MlpMapSet, PointBatch, batched_eval
from .renderer import SceneBounds


class VolvidModel:
    def __init__(self, cfg: ModelConfig, bounds: SceneBounds, n_frames: int, seed: int = 0):
        self.cfg = cfg
        self.bounds = bounds
        self.n_frames = n_frames
        rng = np.random.default_rng(seed)
        self.decoder = DecoderWeights(cfg, rng)
        self.latents = LatentTable(n_frames, cfg.latent_dim, rng)
        self.hash = HashTableSet(cfg, rng)
        self.projector = FeatureProjector(cfg, rng)
        self._cache = None

    # ----- parameters -----

    def param_groups(self) -> dict:
        return {
            "decoder": self.decoder.named_parameters(),
            "latents": self.latents.named_parameters(),
            "hash": self.hash.named_parameters(),
            "projector": self.projector.named_parameters(),
        }

    def named_parameters(self) -> dict:
        out = {}
        for group in self.param_groups().values():
            out.update(group)
        return out

    # ----- frame plumbing -----

    def time_of(self, frame: int) -> float:
        if not 0 <= frame < self.n_frames:
            raise IndexError(f"frame {frame} out of range [0, {self.n_frames})")
        return frame / (self.n_frames - 1) if self.n_frames > 1 else 0.0

    def decode_frame(self, frame: int) -> MlpMapSet:
        """Differentiable decode through the latent table (training path)."""
        return decode(self.decoder, self.latents.row(frame), frame=frame)

    def decode_frame_cached(self, frame: int) -> MlpMapSet:
        if self._cache is None:
            self._cache = DecodeCache(self.decoder, self.latents)
        return self._cache.get(frame)

    def invalidate_cache(self):
        self._cache = None

    # ----- field evaluation (unit-cube points) -----

    def gamma_p(self, mset: MlpMapSet, pts_unit: np.ndarray, t) -> Tensor:
        return point_embed(self.hash, self.projector, mset.triplane, pts_unit, t)

    def density(self, mset: MlpMapSet, pts_unit: np.ndarray, t):
        """(sigma Tensor [N], raw Tensor [N])."""
        batch = PointBatch(positions=pts_unit, dirs=None, times=t)
        return batched_eval(mset, batch, self.gamma_p(mset, pts_unit, t), "density")

    def color(self, mset: MlpMapSet, pts_unit: np.ndarray, dirs: np.ndarray, t) -> Tensor:
        batch = PointBatch(positions=pts_unit, dirs=dirs, times=t)
        gp = self.gamma_p(mset, pts_unit, t)
        gd = dir_encode(dirs, self.cfg.dir_freqs)
        return batched_eval(mset, batch, (gp, gd), "color")

    def radiance(self, mset: MlpMapSet, pts_unit: np.ndarray, dirs: np.ndarray, t):
        """(sigma, rgb) sharing one gamma_p evaluation (training fast path)."""
        batch = PointBatch(positions=pts_unit, dirs=dirs, times=t)
        gp = self.gamma_p(mset, pts_unit, t)
        sigma, _ = batched_eval(mset, batch, gp, "density")
        gd = dir_encode(dirs, self.cfg.dir_freqs)
        rgb = batched_eval(mset, batch, (gp, gd), "color")
        return sigma, rgb
