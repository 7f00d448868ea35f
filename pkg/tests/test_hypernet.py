import numpy as np
import pytest

from volvid.config import ModelConfig
from volvid.diff import Graph, Tensor, backward, ops, using_dtype
from volvid.hypernet import DecodeCache, DecoderWeights, LatentTable, decode

from conftest import micro_config


def tiny_cfg():
    return ModelConfig(
        latent_dim=16, backbone_channels=(16, 12), color_head_channels=(8,),
        feature_dim=8, color_hidden=8, hash_levels=2, hash_log2=8,
        hash_nmin=4, hash_nmax=8,
    )


def test_decode_shapes_micro(rng):
    cfg = micro_config()
    w = DecoderWeights(cfg, np.random.default_rng(0))
    z = Tensor(rng.standard_normal(cfg.latent_dim).astype(np.float32))
    mset = decode(w, z, frame=2)
    assert mset.frame == 2
    r, p = cfg.density_res, cfg.density_p
    for tag in ("xy", "xz", "yz"):
        assert mset.density[tag].grid.shape == (r * r, p)
        assert mset.color[tag].grid.shape == (cfg.color_res**2, cfg.color_p)
    assert mset.triplane.planes.shape == (3, cfg.feature_dim, r, r)


def test_decode_is_pure(rng):
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(3))
    z = Tensor(rng.standard_normal(cfg.latent_dim).astype(np.float32))
    a = decode(w, z)
    b = decode(w, z)
    for tag in a.density:
        np.testing.assert_array_equal(a.density[tag].grid.data, b.density[tag].grid.data)
        np.testing.assert_array_equal(a.color[tag].grid.data, b.color[tag].grid.data)
    np.testing.assert_array_equal(a.triplane.planes.data, b.triplane.planes.data)


def test_zero_final_heads_give_zero_maps(rng):
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(4))
    for k in ("tri.w", "den.w", "col_out.w"):
        w.params[k].data[:] = 0.0
    for z_seed in (0, 1):
        z = Tensor(np.random.default_rng(z_seed).standard_normal(cfg.latent_dim))
        mset = decode(w, z)
        for tag in mset.density:
            np.testing.assert_array_equal(mset.density[tag].grid.data, 0.0)
            np.testing.assert_array_equal(mset.color[tag].grid.data, 0.0)
        np.testing.assert_array_equal(mset.triplane.planes.data, 0.0)


def test_channel_group_bookkeeping(rng):
    # bumping only the XZ block of the density head bias moves only that map
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(5))
    z = Tensor(rng.standard_normal(cfg.latent_dim).astype(np.float32))
    base = decode(w, z)
    k = list(cfg.planes).index("xz")
    w.params["den.b"].data[k * cfg.density_p:(k + 1) * cfg.density_p] += 1.0
    bumped = decode(w, z)
    np.testing.assert_array_equal(base.density["xy"].grid.data, bumped.density["xy"].grid.data)
    np.testing.assert_array_equal(base.density["yz"].grid.data, bumped.density["yz"].grid.data)
    assert np.abs(bumped.density["xz"].grid.data - base.density["xz"].grid.data).max() > 0.5


def test_latent_table_basics():
    cfg = ModelConfig()  # D_z = 256
    a = LatentTable(5, cfg.latent_dim, np.random.default_rng(7))
    b = LatentTable(5, cfg.latent_dim, np.random.default_rng(7))
    np.testing.assert_array_equal(a.latent(0), b.latent(0))
    z = a.z.data
    assert z.shape == (5, 256)
    assert abs(z.mean()) < 0.01
    assert 0.005 < z.std() < 0.02  # N(0, 0.01^2)
    with pytest.raises(IndexError):
        a.latent(5)
    with pytest.raises(IndexError):
        a.latent(-1)


def test_decode_cache_memoizes(rng):
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(6))
    lat = LatentTable(4, cfg.latent_dim, np.random.default_rng(6))
    cache = DecodeCache(w, lat, capacity=4)
    a = cache.get(3)
    b = cache.get(3)
    assert cache.n_decodes == 1
    assert a is b
    fresh = decode(w, lat.row(3), frame=3)
    for tag in a.density:
        np.testing.assert_array_equal(a.density[tag].grid.data, fresh.density[tag].grid.data)


def test_decode_cache_capacity_one_thrashes(rng):
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(6))
    lat = LatentTable(2, cfg.latent_dim, np.random.default_rng(6))
    cache = DecodeCache(w, lat, capacity=1)
    for k in range(6):
        cache.get(k % 2)
    assert cache.n_decodes == 6
    with pytest.raises(ValueError):
        DecodeCache(w, lat, capacity=0)


def test_decode_rejects_nonfinite_latent():
    cfg = tiny_cfg()
    w = DecoderWeights(cfg, np.random.default_rng(8))
    z = np.full(cfg.latent_dim, np.nan)
    with pytest.raises(FloatingPointError):
        decode(w, z)


def test_gradients_reach_latent_and_stem(rng):
    cfg = tiny_cfg()
    with using_dtype(np.float64):
        w = DecoderWeights(cfg, np.random.default_rng(9))
        lat = LatentTable(2, cfg.latent_dim, np.random.default_rng(9))
        g = Graph()
        with g:
            mset = decode(w, lat.row(1), frame=1)
            loss = ops.sum(ops.mul(mset.density["xy"].grid, mset.density["xy"].grid))
        backward(g, loss)
    assert lat.z.grad is not None and np.any(lat.z.grad[1] != 0.0)
    assert np.all(lat.z.grad[0] == 0.0)  # frame 0 untouched
    assert w.params["stem.w"].grad is not None
    assert w.params["den.w"].grad is not None
