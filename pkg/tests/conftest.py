import numpy as np
import pytest

from volvid.config import ModelConfig
from volvid.model import VolvidModel
from volvid.scenekit import checkpoint_of, gen_synthetic, save_checkpoint


def micro_config() -> ModelConfig:
    """Small enough that decode + render run in well under a second."""
    return ModelConfig(
        latent_dim=32,
        backbone_channels=(32, 24, 16),
        color_head_channels=(16, 16),
        feature_dim=16,
        color_hidden=16,
        hash_levels=4,
        hash_log2=10,
        hash_nmax=64,
    )


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyds")
    ds, scene = gen_synthetic(str(root), n_frames=2, n_cams=4, resolution=32, seed=11)
    return ds, scene


@pytest.fixture(scope="session")
def micro_model(toy_dataset):
    ds, _ = toy_dataset
    model = VolvidModel(micro_config(), ds.bounds, ds.n_frames, seed=3)
    # inflate the zero-init density head bias so sigma spreads well past tau1
    # and occupancy comes out neither empty nor full (about 14% at tau1=5)
    den_b = model.decoder.params["den.b"]
    spread = np.random.default_rng(5).normal(0.0, 3e3, size=den_b.data.shape)
    den_b.data = spread.astype(den_b.data.dtype)
    model.invalidate_cache()
    return model


@pytest.fixture(scope="session")
def micro_ckpt(micro_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "micro.ckpt"
    save_checkpoint(checkpoint_of(micro_model, meta={"note": "test fixture"}), str(path))
    return str(path)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
