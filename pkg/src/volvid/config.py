"""Model hyperparameters.

Defaults reproduce the full-scale architecture; shrunk() is the desk-scale
variant used by the test suite and the toy training run. All derived sizes
(map resolutions, per-cell parameter counts) come from properties so a config
is internally consistent by construction.
"""

import json
from dataclasses import asdict, dataclass, field, replace

PLANE_TAGS = ("xy", "xz", "yz")


@dataclass(frozen=True)
class ModelConfig:
    # latent + decoder backbone
    latent_dim: int = 256
    stem_hw: int = 4
    # channels after the stem, then after each transposed conv (len-1 deconvs)
    backbone_channels: tuple = (256, 256, 128, 128, 64, 64, 32)
    # widths of the color head's stride-2 convs; the final stride-1 conv
    # emits n_planes*color_p channels
    color_head_channels: tuple = (64, 64, 64, 64)
    head_gain: float = 0.1

    # point / direction features
    feature_dim: int = 32
    color_hidden: int = 32
    dir_freqs: int = 2

    # spatio-temporal hash encoding
    hash_levels: int = 19
    hash_log2: int = 16
    hash_feat: int = 2
    hash_nmin: int = 16
    hash_nmax: int = 512

    # which MLP-map planes exist (ablations drop some)
    planes: tuple = PLANE_TAGS

    # occupancy / rendering
    occ_res: tuple = (24, 24, 48)
    occ_subgrid: int = 5
    tau1: float = 5.0
    tau2: float = 1e-3
    train_samples: int = 64
    infer_step_divisor: int = 256

    def __post_init__(self):
        if len(self.backbone_channels) < 2:
            raise ValueError("backbone needs the stem plus at least one deconv")
        for p in self.planes:
            if p not in PLANE_TAGS:
                raise ValueError(f"unknown plane tag {p!r}")
        if self.hash_levels > 1 and self.hash_nmax < self.hash_nmin:
            raise ValueError("hash_nmax < hash_nmin")

    # ----- derived sizes -----

    @property
    def n_deconv(self):
        return len(self.backbone_channels) - 1

    @property
    def stem_dim(self):
        return self.backbone_channels[0] * self.stem_hw * self.stem_hw

    @property
    def density_res(self):
        return self.stem_hw << self.n_deconv

    @property
    def color_res(self):
        return self.density_res >> len(self.color_head_channels)

    @property
    def density_p(self):
        # one bias-free feature_dim -> 1 layer
        return self.feature_dim

    @property
    def dir_dim(self):
        return 3 + 6 * self.dir_freqs

    @property
    def color_p(self):
        h = self.color_hidden
        return h * self.feature_dim + h * (h + self.dir_dim) + 3 * h

    @property
    def hash_dim(self):
        return self.hash_levels * self.hash_feat

    @property
    def table_size(self):
        return 1 << self.hash_log2

    @property
    def n_planes(self):
        return len(self.planes)

    # ----- constructors -----

    @classmethod
    def default(cls):
        return cls()

    @classmethod
    def shrunk(cls):
        """Desk-scale config: same wiring, every extent cut down."""
        return cls(
            latent_dim=64,
            backbone_channels=(64, 48, 32, 32),
            color_head_channels=(32, 32, 32),
            feature_dim=16,
            color_hidden=16,
            hash_levels=6,
            hash_log2=12,
            hash_nmax=128,
        )

    def with_planes(self, planes):
        return replace(self, planes=tuple(planes))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        raw = json.loads(text)
        for k in ("backbone_channels", "color_head_channels", "planes", "occ_res"):
            if k in raw:
                raw[k] = tuple(raw[k])
        return cls(**raw)


NAMED_CONFIGS = {
    "default": ModelConfig.default,
    "shrunk": ModelConfig.shrunk,
}
