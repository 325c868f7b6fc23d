import csv
import json

import numpy as np
import pytest

from rollrecon import mrtx
from rollrecon.data import Dataset, simulate_dataset
from rollrecon.errors import ConfigError, DivergenceError, StateError
from rollrecon.model import ModelConfig, NetworkOutput, ScaleOutput, init_weights, network_forward
from rollrecon.tensorgrad import Tensor
from rollrecon.train import (ALL_VARIANTS, TrainConfig, ablation_suite, avg_pool, dmsd_loss,
                             load_checkpoint, save_checkpoint, total_loss, train_loop,
                             variant_configs)

TINY = ModelConfig(S=2, K=1, C=4, J=2, D=3)


def fake_output(x_hat, u_dcs):
    scales = [ScaleOutput(s + 1, None, None, Tensor(u), Tensor(u), None)
              for s, u in enumerate(u_dcs)]
    return NetworkOutput(Tensor(x_hat), scales, [Tensor(x_hat)])


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_mri")
    simulate_dataset(root, "mri", 16, 4, 6, 2, 2, seed=3, coils=2, calib=4)
    return Dataset(root)


@pytest.fixture(scope="module")
def tiny_ct(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_ct")
    simulate_dataset(root, "ct", 16, 2, 4, 2, 2, seed=3, n_views_full=20)
    return Dataset(root)


# -- losses ------------------------------------------------------------------


def test_dmsd_hand_value():
    ref = np.array([[1.0, 2.0], [3.0, 4.0]])[..., None]
    u1, u2 = ref + 0.5, ref - np.array([[1.0, 0.0], [0.0, 3.0]])[..., None]
    out = fake_output(ref, [u1, u2])
    assert dmsd_loss(out, ref).item() == pytest.approx(0.5 + 1.0, abs=1e-12)
    assert dmsd_loss(fake_output(ref, [ref]), ref).item() == 0.0
    assert dmsd_loss(fake_output(ref, [u1]), ref).item() == pytest.approx(0.5)
    with pytest.raises(StateError):
        dmsd_loss(fake_output(ref, []), ref)


def test_total_loss_modes(rng):
    ref = rng.standard_normal((4, 4, 2))
    perfect = fake_output(ref, [ref, ref])
    assert total_loss(perfect, ref, "dmsd").item() == 0.0
    out = fake_output(ref + rng.standard_normal((4, 4, 2)),
                      [ref + rng.standard_normal((4, 4, 2)) for _ in range(2)])
    ss = total_loss(out, ref, "shallow_ss").item()
    assert total_loss(out, ref, "dmsd").item() >= ss
    assert total_loss(out, ref, "shallow_ms", ModelConfig(S=1)).item() == pytest.approx(2 * ss)
    ms = total_loss(out, ref, "shallow_ms", ModelConfig(S=2)).item()
    pooled = np.abs(out.x_hat.data.reshape(2, 2, 2, 2, 2).mean((1, 3))
                    - ref.reshape(2, 2, 2, 2, 2).mean((1, 3))).mean()
    assert ms == pytest.approx(2 * ss + pooled, abs=1e-12)
    with pytest.raises(ValueError):
        total_loss(out, ref, "l2")


def test_avg_pool_adjoint(rng):
    from gradcheck import analytic
    from rollrecon.tensorgrad import vdot
    x = Tensor(rng.standard_normal((2, 8, 8, 3)), requires_grad=True)
    w = rng.standard_normal((2, 2, 2, 3))
    (g,) = analytic(lambda: vdot(avg_pool(x, 4), w), [x])
    assert np.vdot(avg_pool(x, 4).data, w) == pytest.approx(np.vdot(x.data, g))


def test_deep_msl_runs_and_is_nonnegative(tiny_data):
    x, y, x0 = (a.astype(np.float64) for a in tiny_data.arrays("train"))
    w = init_weights(TINY, 0, np.float64)
    out = network_forward(x0[:2], y[:2], tiny_data.op, w, TINY)
    deep = total_loss(out, x[:2], "deep_msl", TINY, w).item()
    assert deep >= total_loss(out, x[:2], "shallow_ss").item() >= 0


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=1e-2)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(loss_mode="mse")
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 2, "momentum": 0.9})
    assert TrainConfig.from_dict(TrainConfig(lr=1e-3).to_dict()).lr == 1e-3


# -- checkpoints ---------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    w = init_weights(TINY, 0)
    save_checkpoint(tmp_path / "ck", w, TINY)
    manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
    assert manifest["keys"] == list(w) and manifest["dtype"] == "f32"
    w2, cfg = load_checkpoint(tmp_path / "ck")
    assert cfg == TINY
    assert all(np.array_equal(w[k].data, w2[k].data) and w2[k].dtype == np.float32 for k in w)
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing")


def test_checkpoint_shape_mismatch(tmp_path):
    save_checkpoint(tmp_path / "ck", init_weights(TINY, 0), TINY)
    key = "cascade1/refine2.bias"
    mrtx.write(tmp_path / "ck" / "weights" / f"{key}.mrtx", np.zeros(5, np.float32))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "ck")


# -- loop --------------------------------------------------------------------------------


def test_train_loop_outputs_and_determinism(tiny_data, tmp_path):
    t = TrainConfig(epochs=2, lr=1e-3, batch_size=4, seed=1)
    a = train_loop(t, TINY, tiny_data, tmp_path / "a")
    b = train_loop(t, TINY, tiny_data, tmp_path / "b")
    assert [r["train_loss"] for r in a.history] == [r["train_loss"] for r in b.history]
    for name in ("history.csv", "best/manifest.json", "final/manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for k in a.weights:
        assert np.array_equal(a.weights[k].data, b.weights[k].data)
    rows = list(csv.reader(open(tmp_path / "a" / "history.csv")))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "val_psnr", "val_ssim"]
    assert len(rows) == 3 and all(cell != "" for cell in rows[1])


def test_lr_zero_keeps_weights(tiny_data):
    res = train_loop(TrainConfig(epochs=2, lr=0.0, seed=2), TINY, tiny_data)
    init = init_weights(TINY, 2)
    assert all(np.array_equal(res.weights[k].data, init[k].data) for k in init)


def test_training_reduces_loss(tiny_data):
    res = train_loop(TrainConfig(epochs=6, lr=1e-3, batch_size=2, seed=0), TINY, tiny_data)
    assert res.history[-1]["train_loss"] < res.history[0]["train_loss"]


def test_val_cadence(tiny_data):
    res = train_loop(TrainConfig(epochs=3, lr=1e-3, seed=0, val_every=2), TINY, tiny_data)
    assert [r["val_psnr"] is None for r in res.history] == [True, False, False]


def test_modality_mismatch(tiny_ct):
    with pytest.raises(ConfigError):
        train_loop(TrainConfig(epochs=1), TINY, tiny_ct)


def test_ct_training_runs(tiny_ct, tmp_path):
    res = train_loop(TrainConfig(epochs=1, lr=1e-3), TINY.replace(P=1), tiny_ct, tmp_path)
    assert np.isfinite(res.history[0]["train_loss"])


def test_divergence_names_key(tiny_data, monkeypatch):
    bad = "cascade1/scale1/enc1.kernel"
    import rollrecon.train as tr
    orig = tr.init_weights

    def poisoned(cfg, seed, dtype):
        w = orig(cfg, seed, dtype)
        w[bad].data[0, 0, 0, 0] = np.nan
        return w

    monkeypatch.setattr(tr, "init_weights", poisoned)
    with pytest.raises(DivergenceError) as info:
        train_loop(TrainConfig(epochs=1), TINY, tiny_data)
    assert info.value.key == f"weights/{bad}"


# -- ablations ----------------------------------------------------------------------------


def test_variant_configs():
    runs = variant_configs(TINY, TrainConfig(), ALL_VARIANTS, s_sweep=(1, 2), j_sweep=(1, 2))
    assert len(runs) == len(ALL_VARIANTS) + 4
    assert runs["no_dc"][0].no_dc and not runs["full"][0].no_dc
    assert runs["shallow_ms"][1].loss_mode == "shallow_ms"
    assert runs["S=1"][0].S == 1 and runs["J=2"][0].J == 2
    assert len(variant_configs(TINY, TrainConfig(), ["full", "no_ssm"])) == 2
    with pytest.raises(ConfigError):
        variant_configs(TINY, TrainConfig(), ["bogus"])


def test_ablation_suite_csv(tiny_data, tmp_path):
    rows = ablation_suite(TINY, TrainConfig(epochs=1, lr=1e-3), tiny_data, tmp_path,
                          ["full", "no_dc"], s_sweep=[1])
    assert [r["variant"] for r in rows] == ["full", "no_dc", "S=1"]
    assert all(r["n_test"] == 2 for r in rows)
    lines = (tmp_path / "ablation.csv").read_text().splitlines()
    assert lines[0] == "variant,psnr_mean,psnr_std,ssim_mean,ssim_std,n_test"
    assert len(lines) == 4
