"""Loss decomposition, Adam, learning-rate schedule, and the training loop."""

import csv
import os

import numpy as np
import pytest

from volvid.diff import Graph, ShapeError, Tensor, backward
from volvid.model import VolvidModel
from volvid.trainer import (
    LR_GROUP_OF,
    Adam,
    TrainConfig,
    compute_loss,
    evaluate_lc,
    train,
    train_step,
)

from conftest import micro_config


def test_compute_loss_zero_residual():
    target = np.array([[0.2, 0.4, 0.6], [0.0, 1.0, 0.5]])
    rendered = Tensor(target.copy())
    opacity = Tensor(np.array([0.3, 0.8]))
    total, rep = compute_loss(rendered, target, opacity, mask=None, z_batch=None)
    assert float(total.data) == 0.0
    assert rep.l_c == rep.l_kl == rep.l_m == rep.total == 0.0


def test_compute_loss_single_ray_residual():
    rendered = Tensor(np.array([[0.2, 0.3, 0.4]]))
    target = np.array([[0.1, 0.3, 0.4]])
    total, rep = compute_loss(rendered, target, Tensor(np.array([0.5])), None, None)
    assert rep.l_c == pytest.approx(0.01)
    assert float(total.data) == pytest.approx(0.01)
    assert rep.ray_count == 1


def test_compute_loss_mask_and_kl_terms():
    rendered = Tensor(np.zeros((1, 3)))
    target = np.zeros((1, 3))
    opacity = Tensor(np.array([0.7]))
    mask = np.array([0.2])
    z = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    total, rep = compute_loss(rendered, target, opacity, mask, z, lam_kl=1e-6, lam_m=0.1)
    assert rep.l_m == pytest.approx(0.25)
    assert rep.l_kl == pytest.approx(15.0)  # 0.5 * (1+4+9+16)
    assert rep.total == pytest.approx(0.1 * 0.25 + 1e-6 * 15.0)
    rep.check_identity(lam_kl=1e-6, lam_m=0.1)
    rep.total += 1.0
    with pytest.raises(AssertionError, match="decomposition"):
        rep.check_identity(lam_kl=1e-6, lam_m=0.1)


def test_compute_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        compute_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 3)), Tensor(np.zeros(2)), None, None)
    with pytest.raises(ShapeError):
        compute_loss(
            Tensor(np.zeros((2, 3))), np.zeros((2, 3)), Tensor(np.zeros(2)), np.zeros(3), None
        )


def test_compute_loss_gradient():
    rendered = Tensor(np.array([[0.5, 0.1, 0.9]]), requires_grad=True)
    target = np.array([[0.2, 0.1, 1.0]])
    g = Graph()
    with g:
        total, _ = compute_loss(rendered, target, Tensor(np.array([0.0])), None, None)
    backward(g, total)
    want = 2.0 * (rendered.data - target.astype(rendered.data.dtype))
    np.testing.assert_allclose(rendered.grad, want, atol=1e-6)


def _scalar_param(value):
    return Tensor(np.array([value], dtype=np.float64), requires_grad=True)


def test_adam_first_step_matches_hand_formula():
    p = _scalar_param(1.0)
    adam = Adam({"w": p})
    p.grad = np.array([2.0])
    bad = adam.step(0.1)
    assert bad == []
    # bias-corrected m_hat = g, v_hat = g^2 -> update = lr * sign(g)
    assert p.data[0] == pytest.approx(1.0 - 0.1, rel=1e-6)


def test_adam_converges_on_quadratic():
    p = _scalar_param(1.0)
    adam = Adam({"w": p})
    for _ in range(200):
        p.grad = 2.0 * p.data
        adam.step(0.1)
    assert abs(p.data[0]) < 0.05


def test_adam_none_and_zero_grads_leave_param_alone():
    p = _scalar_param(3.0)
    q = _scalar_param(4.0)
    adam = Adam({"p": p, "q": q})
    q.grad = np.array([0.0])
    adam.step(0.5)
    assert p.data[0] == 3.0  # grad None: untouched
    assert q.data[0] == 4.0  # zero grad: zero update


def test_adam_group_rates():
    hp = _scalar_param(1.0)
    bp = _scalar_param(1.0)
    adam = Adam({"hash.xy": hp, "decoder.stem.w": bp}, LR_GROUP_OF)
    hp.grad = np.array([1.0])
    bp.grad = np.array([1.0])
    adam.step({"base": 0.0, "hash": 0.1})
    assert bp.data[0] == 1.0
    assert hp.data[0] == pytest.approx(0.9, rel=1e-6)


def test_adam_skips_whole_step_on_nonfinite():
    a = _scalar_param(1.0)
    b = _scalar_param(2.0)
    adam = Adam({"a": a, "b": b})
    a.grad = np.array([np.nan])
    b.grad = np.array([1.0])
    bad = adam.step(0.1)
    assert bad == ["a"]
    assert a.data[0] == 1.0 and b.data[0] == 2.0  # nothing moved
    assert adam.skipped_steps == 1
    assert adam.t == 0
    a.grad = np.array([1.0])
    assert adam.step(0.1) == []
    assert adam.t == 1


def test_lr_schedule():
    tcfg = TrainConfig(lr_base=5e-4, lr_hash=5e-3)
    assert tcfg.lrs_at(0) == {"base": 5e-4, "hash": 5e-3}
    assert tcfg.lrs_at(400)["base"] == pytest.approx(5e-5)
    assert tcfg.lrs_at(400)["hash"] == pytest.approx(5e-4)
    assert tcfg.lrs_at(200)["base"] == pytest.approx(5e-4 * 0.1**0.5)
    # hash stays 10x base at every epoch
    for e in (0, 37, 250, 800):
        lrs = tcfg.lrs_at(e)
        assert lrs["hash"] == pytest.approx(10.0 * lrs["base"])


def test_train_step_report(toy_dataset):
    ds, _ = toy_dataset
    model = VolvidModel(micro_config(), ds.bounds, ds.n_frames, seed=4)
    tcfg = TrainConfig(batch_images=2, rays_per_image=32)
    rng = np.random.default_rng(0)
    report = train_step(model, ds, tcfg, rng, epoch=3)
    assert report.epoch == 3
    assert report.lrs == tcfg.lrs_at(3)
    assert report.ray_count > 0
    report.check_identity(tcfg.lam_kl, tcfg.lam_m)
    # gradients actually reached every group
    grads = {k: p.grad for k, p in model.named_parameters().items()}
    assert grads["latents.z"] is not None
    assert grads["hash.xy"] is not None
    assert grads["decoder.stem.w"] is not None


def test_train_loop_csv_and_improvement(toy_dataset, tmp_path):
    ds, _ = toy_dataset
    model = VolvidModel(micro_config(), ds.bounds, ds.n_frames, seed=4)
    out = tmp_path / "run"
    tcfg = TrainConfig(
        epochs=6, steps_per_epoch=4, batch_images=2, rays_per_image=64,
        seed=9, out_dir=str(out), checkpoint_every=3,
    )
    history = train(ds, model, tcfg)
    assert len(history) == 6 * 4

    with open(out / "loss_curve.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "l_c", "l_kl", "l_m", "total", "lr"]
    assert len(rows) == 1 + len(history)
    for row, rep in zip(rows[1:], history):
        assert int(row[0]) == rep.epoch
        assert float(row[1]) == pytest.approx(rep.l_c)
        assert float(row[5]) == pytest.approx(tcfg.lrs_at(rep.epoch)["base"])

    assert os.path.exists(out / "model.ckpt")
    assert os.path.exists(out / "epoch0003.ckpt")
    assert os.path.exists(out / "epoch0006.ckpt")

    # fitting 2 frames of a 32px toy scene: per-ray color loss must drop
    per_ray = np.array([h.l_c / h.ray_count for h in history])
    assert per_ray[-4:].mean() < per_ray[:4].mean()


def test_evaluate_lc_deterministic(toy_dataset):
    ds, _ = toy_dataset
    model = VolvidModel(micro_config(), ds.bounds, ds.n_frames, seed=4)
    a = evaluate_lc(model, ds, frame=0, cam=0)
    b = evaluate_lc(model, ds, frame=0, cam=0)
    assert a == b
    assert a > 0.0
