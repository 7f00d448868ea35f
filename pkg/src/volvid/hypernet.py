"""Per-frame latent codes and the shared convolutional map decoder.

decode(w, z) runs the stem, the transposed-conv backbone, and three heads,
returning the frame's MlpMapSet (density maps, color maps, tri-planes).
Channel groups split per plane tag in the order given by cfg.planes.
"""

from collections import OrderedDict

import numpy as np

from .config import ModelConfig
from .diff import Tensor, ops
from .diff.dtypes import default_dtype
from .encodings import TriPlaneFeatures
from .mlpmaps import MlpMap, MlpMapSet


def _kaiming(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class LatentTable:
    """One learnable latent vector per video frame, N(0, 0.01^2) init."""

    def __init__(self, n_frames: int, dim: int, rng: np.random.Generator):
        if n_frames < 1:
            raise ValueError("need at least one frame")
        self.n_frames = n_frames
        self.dim = dim
        self.z = Tensor(
            (rng.standard_normal((n_frames, dim)) * 0.01).astype(default_dtype()),
            requires_grad=True,
        )

    def _check(self, frame: int):
        if not 0 <= frame < self.n_frames:
            raise IndexError(f"frame {frame} out of range [0, {self.n_frames})")

    def latent(self, frame: int) -> np.ndarray:
        """Read-only copy of frame's latent vector."""
        self._check(frame)
        return self.z.data[frame].copy()

    def row(self, frame: int) -> Tensor:
        """Differentiable view used by training."""
        self._check(frame)
        return ops.getitem(self.z, frame)

    def rows(self, frames) -> Tensor:
        frames = np.asarray(frames, dtype=np.int64)
        for f in frames:
            self._check(int(f))
        return ops.getitem(self.z, frames)

    def named_parameters(self):
        return {"latents.z": self.z}


class DecoderWeights:
    """All decoder parameters, keyed for checkpointing and optimizer groups."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        p = OrderedDict()
        ch = cfg.backbone_channels
        p["stem.w"] = Tensor(_kaiming(rng, (cfg.stem_dim, cfg.latent_dim), cfg.latent_dim), requires_grad=True)
        p["stem.b"] = Tensor(np.zeros(cfg.stem_dim, dtype=default_dtype()), requires_grad=True)
        for i in range(cfg.n_deconv):
            cin, cout = ch[i], ch[i + 1]
            # deconv kernels are [C_in, C_out, k, k]
            p[f"deconv{i}.w"] = Tensor(_kaiming(rng, (cin, cout, 4, 4), cin * 16), requires_grad=True)
            p[f"deconv{i}.b"] = Tensor(np.zeros((cout, 1, 1), dtype=default_dtype()), requires_grad=True)
        cbb = ch[-1]
        npl = cfg.n_planes
        p["tri.w"] = Tensor(
            _kaiming(rng, (3 * cfg.feature_dim, cbb, 3, 3), cbb * 9, cfg.head_gain), requires_grad=True
        )
        p["tri.b"] = Tensor(np.zeros((3 * cfg.feature_dim, 1, 1), dtype=default_dtype()), requires_grad=True)
        p["den.w"] = Tensor(
            _kaiming(rng, (npl * cfg.density_p, cbb, 3, 3), cbb * 9, cfg.head_gain), requires_grad=True
        )
        p["den.b"] = Tensor(np.zeros((npl * cfg.density_p, 1, 1), dtype=default_dtype()), requires_grad=True)
        prev = cbb
        for i, w in enumerate(cfg.color_head_channels):
            p[f"col{i}.w"] = Tensor(_kaiming(rng, (w, prev, 3, 3), prev * 9), requires_grad=True)
            p[f"col{i}.b"] = Tensor(np.zeros((w, 1, 1), dtype=default_dtype()), requires_grad=True)
            prev = w
        p["col_out.w"] = Tensor(
            _kaiming(rng, (npl * cfg.color_p, prev, 3, 3), prev * 9, cfg.head_gain), requires_grad=True
        )
        p["col_out.b"] = Tensor(np.zeros((npl * cfg.color_p, 1, 1), dtype=default_dtype()), requires_grad=True)
        self.params = p

    def named_parameters(self):
        return {f"decoder.{k}": v for k, v in self.params.items()}


def _layer(x, w, b, name, stride, padding, act, deconv=False):
    conv = ops.deconv2d if deconv else ops.conv2d
    y = ops.add(conv(x, w, stride=stride, padding=padding), b)
    if act:
        y = ops.relu(y)
    return ops.assert_finite(y, name)


def decode(weights: DecoderWeights, z: Tensor, frame: int = 0) -> MlpMapSet:
    """Pure function of (weights, z): the frame's full MlpMapSet."""
    cfg = weights.cfg
    p = weights.params
    if not np.all(np.isfinite(z.data if isinstance(z, Tensor) else z)):
        raise FloatingPointError("non-finite latent z")
    if not isinstance(z, Tensor):
        z = Tensor(np.asarray(z, dtype=default_dtype()))
    h = ops.relu(ops.add(ops.matmul(p["stem.w"], z), p["stem.b"]))
    h = ops.assert_finite(h, "stem")
    x = ops.reshape(h, (cfg.backbone_channels[0], cfg.stem_hw, cfg.stem_hw))
    for i in range(cfg.n_deconv):
        x = _layer(x, p[f"deconv{i}.w"], p[f"deconv{i}.b"], f"deconv{i}", 2, 1, act=True, deconv=True)

    tri = _layer(x, p["tri.w"], p["tri.b"], "tri_head", 1, 1, act=False)
    r = cfg.density_res
    triplane = TriPlaneFeatures(ops.reshape(tri, (3, cfg.feature_dim, r, r)))

    den = _layer(x, p["den.w"], p["den.b"], "density_head", 1, 1, act=False)
    density = {}
    for k, tag in enumerate(cfg.planes):
        sl = ops.getitem(den, slice(k * cfg.density_p, (k + 1) * cfg.density_p))
        density[tag] = MlpMap.from_decoder(tag, sl)

    y = x
    for i in range(len(cfg.color_head_channels)):
        y = _layer(y, p[f"col{i}.w"], p[f"col{i}.b"], f"col{i}", 2, 1, act=True)
    y = _layer(y, p["col_out.w"], p["col_out.b"], "color_head", 1, 1, act=False)
    color = {}
    for k, tag in enumerate(cfg.planes):
        sl = ops.getitem(y, slice(k * cfg.color_p, (k + 1) * cfg.color_p))
        color[tag] = MlpMap.from_decoder(tag, sl)

    return MlpMapSet(density=density, color=color, triplane=triplane, frame=frame)


class DecodeCache:
    """LRU memo of decoded frames for the inference path."""

    def __init__(self, weights: DecoderWeights, latents: LatentTable, capacity: int = 4):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.weights = weights
        self.latents = latents
        self.capacity = capacity
        self._cache = OrderedDict()
        self.n_decodes = 0

    def get(self, frame: int) -> MlpMapSet:
        if frame in self._cache:
            self._cache.move_to_end(frame)
            return self._cache[frame]
        z = Tensor(self.latents.latent(frame))
        mset = decode(self.weights, z, frame=frame)
        self.n_decodes += 1
        self._cache[frame] = mset
        while len(self._cache) > self.capacity:
            self._cache.popitem(last=False)
        return mset

    def clear(self):
        self._cache.clear()
