import warnings

import numpy as np
import pytest

from volvid.config import ModelConfig
from volvid.diff import Tensor, ops, using_dtype
from volvid.diff.gradcheck import check_gradients
from volvid.encodings import (
    PLANE_ORDER,
    FeatureProjector,
    HashTableSet,
    TriPlaneFeatures,
    dir_encode,
    hash_encode,
    level_resolutions,
    point_embed,
    triplane_sample,
)

HASH_PRIMES = (1, 2654435761, 805459861)  # independent copy for the oracle


def small_cfg(**kw):
    base = dict(hash_levels=4, hash_log2=10, hash_nmin=16, hash_nmax=64,
                feature_dim=16, latent_dim=32,
                backbone_channels=(32, 24, 16), color_head_channels=(16, 16),
                color_hidden=16)
    base.update(kw)
    return ModelConfig(**base)


def test_level_resolutions_geometric():
    res = level_resolutions(16, 512, 19)
    assert res.shape == (19, 3)
    assert res[0, 0] == 16 and res[-1, 0] == 512
    assert np.all(np.diff(res[:, 0]) > 0)
    # all three lattice axes share the schedule (t included)
    assert np.all(res[:, 0] == res[:, 1]) and np.all(res[:, 0] == res[:, 2])


def test_hash_encode_zero_tables(rng):
    tables = HashTableSet(small_cfg(), rng)
    for t in tables.tables.values():
        t.data[:] = 0.0
    out = hash_encode(tables, np.array([0.3, 0.5, 0.9]), 0.25)
    assert out.shape == (tables.out_dim,)
    np.testing.assert_array_equal(out.data, 0.0)


def test_hash_encode_default_width():
    tables = HashTableSet(ModelConfig(), np.random.default_rng(0))
    out = hash_encode(tables, np.array([0.1, 0.2, 0.3]), 0.0)
    assert out.shape == (38,)  # L*F = 19*2


def _slot_of(cx, cy, ct, tsize):
    with np.errstate(over="ignore"):  # uint32 wraparound is the contract
        h = np.uint32(cx) * np.uint32(HASH_PRIMES[0])
        h ^= np.uint32(cy) * np.uint32(HASH_PRIMES[1])
        h ^= np.uint32(ct) * np.uint32(HASH_PRIMES[2])
    return int(h) & (tsize - 1)


def test_hash_encode_vertex_slot_oracle(rng):
    # a point on an exact level-l lattice vertex collapses the trilinear
    # weights onto one hashed slot; plant a value there and read it back
    cfg = small_cfg()
    tables = HashTableSet(cfg, rng)
    for t in tables.tables.values():
        t.data[:] = 0.0
    lvl = 0
    n = int(tables.resolutions[lvl, 0])  # 16: dyadic fractions are exact
    ix, iy, it = 3, 5, 7
    slot = _slot_of(ix, iy, it, cfg.table_size)
    planted = np.array([0.7, -0.3])
    tables.tables["xy"].data[lvl * cfg.table_size + slot] = planted

    p = np.array([ix / n, iy / n, 0.123])  # z only touches xz/yz (zeroed)
    out = hash_encode(tables, p, it / n).data
    np.testing.assert_allclose(out[lvl * 2:(lvl + 1) * 2], planted, atol=1e-6)
    np.testing.assert_array_equal(out[(lvl + 1) * 2:], 0.0)


def test_hash_encode_continuity_unit_scale_tables(rng):
    tables = HashTableSet(small_cfg(), rng)
    for t in tables.tables.values():
        t.data = rng.uniform(-1.0, 1.0, size=t.data.shape).astype(t.data.dtype)
    p = rng.random((200, 3)) * 0.98 + 0.01
    step = rng.standard_normal((200, 3))
    step *= 1e-6 / np.linalg.norm(step, axis=1, keepdims=True)
    with using_dtype(np.float64):
        a = hash_encode(tables, p, 0.4).data
        b = hash_encode(tables, p + step, 0.4).data
    assert np.abs(a - b).max() < 1e-3


def test_hash_encode_plane_permutation_symmetry(rng):
    # a constant table contributes the same constant regardless of plane
    cfg = small_cfg()
    p = rng.random((16, 3))
    outs = []
    for which in PLANE_ORDER:
        tables = HashTableSet(cfg, rng)
        for tag, t in tables.tables.items():
            t.data[:] = 0.55 if tag == which else 0.0
        outs.append(hash_encode(tables, p, 0.7).data)
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-6)
    np.testing.assert_allclose(outs[1], outs[2], atol=1e-6)


def test_triplane_constant_field():
    planes = TriPlaneFeatures.constant(0.2, channels=8, resolution=16)
    out = triplane_sample(planes, np.array([0.31, 0.62, 0.97]))
    np.testing.assert_allclose(out.data, 3 * 0.2, rtol=1e-6)


def test_triplane_texel_center_oracle(rng):
    r, c = 8, 4
    data = rng.standard_normal((3, c, r, r)).astype(np.float32)
    planes = TriPlaneFeatures(Tensor(data))
    ix, jy, jz = 2, 5, 1
    p = np.array([(ix + 0.5) / r, (jy + 0.5) / r, (jz + 0.5) / r])
    want = data[0][:, jy, ix] + data[1][:, jz, ix] + data[2][:, jz, jy]
    np.testing.assert_allclose(triplane_sample(planes, p).data, want, atol=1e-6)


def test_triplane_clamps_outside_cube(rng):
    planes = TriPlaneFeatures(Tensor(rng.standard_normal((3, 2, 8, 8)).astype(np.float32)))
    inside = triplane_sample(planes, np.array([0.0, 1.0, 0.5])).data
    outside = triplane_sample(planes, np.array([-3.0, 7.2, 0.5])).data
    np.testing.assert_array_equal(inside, outside)


def test_point_embed_zero_everywhere(rng):
    cfg = small_cfg()
    tables = HashTableSet(cfg, rng)
    proj = FeatureProjector(cfg, rng)
    for t in tables.tables.values():
        t.data[:] = 0.0
    planes = TriPlaneFeatures.constant(0.0, cfg.feature_dim, 8)
    out = point_embed(tables, proj, planes, np.array([0.4, 0.5, 0.6]), 0.1)
    assert out.shape == (cfg.feature_dim,)
    np.testing.assert_array_equal(out.data, 0.0)


def test_point_embed_compositional_oracle(rng):
    cfg = small_cfg()
    tables = HashTableSet(cfg, rng)
    proj = FeatureProjector(cfg, rng)
    planes = TriPlaneFeatures(
        Tensor(rng.standard_normal((3, cfg.feature_dim, 8, 8)).astype(np.float32))
    )
    pts = rng.random((100, 3))
    got = point_embed(tables, proj, planes, pts, 0.5).data
    want = hash_encode(tables, pts, 0.5).data @ proj.weight.data \
        + triplane_sample(planes, pts).data
    assert got.shape == (100, cfg.feature_dim)
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_point_embed_gradients(rng):
    cfg = small_cfg(hash_levels=2, hash_log2=6, hash_nmin=2, hash_nmax=8)
    with using_dtype(np.float64):
        tables = HashTableSet(cfg, rng)
        for t in tables.tables.values():
            t.data = rng.uniform(-0.5, 0.5, t.data.shape)
        proj = FeatureProjector(cfg, rng)
        planes = TriPlaneFeatures(Tensor(rng.standard_normal((3, cfg.feature_dim, 4, 4)),
                                         requires_grad=True))
        pts = rng.random((5, 3))

        def build():
            e = point_embed(tables, proj, planes.planes if False else planes, pts, 0.3)
            return ops.sum(ops.mul(e, e))

        params = list(tables.tables.values()) + [proj.weight, planes.planes]
        assert check_gradients(build, params) < 1e-3


def test_dir_encode_shape_and_values():
    out = dir_encode(np.array([0.0, 0.0, 1.0]))
    assert out.shape == (15,)
    np.testing.assert_allclose(out[:3], [0.0, 0.0, 1.0], atol=1e-7)
    # layout: [d, sin(pi d), cos(pi d), sin(2pi d), cos(2pi d)]
    np.testing.assert_allclose(out[3:5], 0.0, atol=1e-7)   # sin(pi*0) for x,y
    np.testing.assert_allclose(out[6:8], 1.0, atol=1e-7)   # cos(pi*0) for x,y
    np.testing.assert_allclose(out[5], np.sin(np.pi), atol=1e-6)
    np.testing.assert_allclose(out[8], np.cos(np.pi), atol=1e-6)


def test_dir_encode_parity():
    d = np.array([0.6, -0.64, 0.48])
    d /= np.linalg.norm(d)
    a, b = dir_encode(d), dir_encode(-d)
    # raw and sin entries flip sign, cos entries are even
    np.testing.assert_allclose(a[:6], -b[:6], atol=1e-7)
    np.testing.assert_allclose(a[6:9], b[6:9], atol=1e-7)
    np.testing.assert_allclose(a[9:12], -b[9:12], atol=1e-7)
    np.testing.assert_allclose(a[12:15], b[12:15], atol=1e-7)


def test_dir_encode_normalizes_and_warns():
    d = np.array([0.0, 0.0, 2.0])
    with pytest.warns(UserWarning):
        out = dir_encode(d)
    np.testing.assert_allclose(out, dir_encode(np.array([0.0, 0.0, 1.0])), atol=1e-7)


def test_dir_encode_batch(rng):
    d = rng.standard_normal((6, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    out = dir_encode(d)
    assert out.shape == (6, 15)
    np.testing.assert_allclose(out[2], dir_encode(d[2]), atol=1e-7)
