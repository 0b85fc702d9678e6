import json
import math

import numpy as np
import pytest

from sata import synth
from sata.autodiff import checkpoint
from sata.errors import EmptyDataset, InvalidConfig, NaNLoss
from sata.graphrepr import VQ, VX
from sata.inference import prepare
from sata.kinematics import canonicalize, clip_positions
from sata.model import SATA, ModelConfig, sequence_batch
from sata.semantics import HashEmbedding
from sata.training import (LossWeights, TrainConfig, batch_positions, fit, kl_loss, load_model, make_batches,
                           penetration, reconstruction_loss, save_model, total_loss)

D_TEXT = 8


def cfg(**kw):
    base = dict(hidden=16, heads=2, ff_inner=16, latent_dim=8, d_text=D_TEXT, dropout=0.0, blocks_per_side=1,
                quantizers=2, codebook_size=8, window=16, overlap=4)
    base.update(kw)
    return ModelConfig(**base)


def seq_for(preset, motion="walk_cycle", frames=16):
    clip, tags = synth.generate(synth.SynthSpec(preset, motion, frames=frames))
    return prepare(clip, tags, HashEmbedding(D_TEXT))


# --- closed-form pieces ----------------------------------------------------------------

@pytest.mark.parametrize("mu, lv, expected", [(0.0, 0.0, 0.0), (1.0, 0.0, 0.5),
                                              (0.0, math.log(2.0), 0.5 * (2 - 1 - math.log(2.0)))])
def test_kl_closed_form(mu, lv, expected):
    val = float(kl_loss(np.full((3, 2), mu), np.full((3, 2), lv)).data)
    assert val == pytest.approx(expected, abs=1e-6)


def test_kl_example_value():
    assert 0.5 * (2 - 1 - math.log(2.0)) == pytest.approx(0.1534, abs=1e-4)


def test_penetration_single_foot():
    assert float(penetration(np.array([-0.1])).data.sum()) == pytest.approx(0.01, rel=1e-6)
    assert float(penetration(np.array([0.2])).data.sum()) == 0.0


# --- differentiable FK matches the kinematics module ---------------------------------------

@pytest.mark.parametrize("preset", ["chain5", "biped17", "quadruped13"])
def test_batch_positions_match_fk(preset):
    clip, tags = synth.generate(synth.SynthSpec(preset, "turn_in_place", frames=10))
    seq = prepare(clip, tags, HashEmbedding(D_TEXT))
    batch = sequence_batch([seq])
    P = batch_positions(batch.targets.astype(np.float64), batch).data
    np.testing.assert_allclose(P, clip_positions(canonicalize(clip)), atol=1e-5)


# --- reconstruction loss -----------------------------------------------------------------

def test_loss_of_ground_truth_is_zero():
    batch = sequence_batch([seq_for("biped17"), seq_for("quadruped13")])
    total, comp = reconstruction_loss(batch.targets, batch)
    assert set(comp) == {"rot", "pos", "root", "label", "vel", "contact", "smooth", "penetration"}
    for k, v in comp.items():
        assert float(v.data) == pytest.approx(0.0, abs=1e-10), k
    assert float(total.data) == pytest.approx(0.0, abs=1e-10)


def test_constant_velocity_has_zero_smoothness():
    seq = seq_for("chain5", "static", frames=8)
    batch = sequence_batch([seq])
    pred = batch.targets.astype(np.float64).copy()
    pred[:, 0, 7] = 0.05  # steady forward drift; gt is static
    _, comp = reconstruction_loss(pred, batch)
    assert float(comp["smooth"].data) == pytest.approx(0.0, abs=1e-12)
    assert float(comp["vel"].data) > 0


def test_sunken_prediction_is_penalized():
    batch = sequence_batch([seq_for("biped17", "static", frames=4)])
    pred = batch.targets.astype(np.float64).copy()
    pred[:, 0, 9] -= 0.1  # lower the root height by 10 cm
    _, comp = reconstruction_loss(pred, batch, LossWeights(w_penetration=1.0))
    feet = np.flatnonzero(batch.contact)
    gt_h = batch_positions(batch.targets.astype(np.float64), batch).data[:, feet, 1] - batch.ground[0]
    # feet on the ground in the reference sink by 0.1 m
    expected = np.mean(np.maximum(0.1 - gt_h, 0.0) ** 2 - np.maximum(-gt_h, 0.0) ** 2)
    assert float(comp["penetration"].data) == pytest.approx(expected, rel=1e-4)
    assert float(comp["penetration"].data) > 0


def test_total_loss_components():
    model = SATA(cfg())
    batch = sequence_batch([seq_for("chain5")])
    loss, comp, aux = total_loss(model, batch, rng=np.random.default_rng(0))
    assert "kl" in comp and np.isfinite(float(loss.data))
    model = SATA(cfg(bottleneck="rvq"))
    model.train()
    loss, comp, aux = total_loss(model, batch)
    assert "commit" in comp and aux["indices"].shape == (16, 1, 2)


def test_loss_weight_validation():
    with pytest.raises(InvalidConfig):
        LossWeights(w_rot=-1)
    with pytest.raises(InvalidConfig):
        LossWeights.from_dict({"w_bogus": 1})


# --- batching -----------------------------------------------------------------------------

def test_single_clip_single_window():
    seq = seq_for("chain5", frames=64)
    batches = make_batches([seq], window=64, batch_size=1)
    assert len(batches) == 1
    np.testing.assert_array_equal(batches[0].features, seq.features.astype(np.float32))


def test_short_clip_is_padded_with_frozen_frames():
    seq = seq_for("chain5", frames=20)
    (b,) = make_batches([seq], window=64, batch_size=1)
    f = b.features
    assert f.shape[0] == 64
    frozen = f[20:]
    last = seq.features[19].astype(np.float32)
    np.testing.assert_array_equal(frozen[..., VQ], 0)
    np.testing.assert_array_equal(frozen[..., VX], 0)
    np.testing.assert_array_equal(frozen[..., 0:6], np.broadcast_to(last[..., 0:6], frozen[..., 0:6].shape))
    np.testing.assert_array_equal(frozen[:, 0, 18:21], 0)  # root yaw rate and planar step


def test_mixed_batch_node_count():
    batches = make_batches([seq_for("chain5"), seq_for("quadruped13")], window=16, batch_size=2)
    (b,) = batches
    assert b.n_nodes == 18 and b.n_graphs == 2
    assert not np.any(b.graph_id[b.edges[:, 0]] != b.graph_id[b.edges[:, 1]])


def test_make_batches_deterministic_and_empty():
    ds = [seq_for("chain5", frames=40), seq_for("biped17", frames=40)]
    a = make_batches(ds, window=16, batch_size=1, seed=3, epoch=2)
    b = make_batches(ds, window=16, batch_size=1, seed=3, epoch=2)
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features)
    with pytest.raises(EmptyDataset):
        make_batches([], window=16)


# --- fit ---------------------------------------------------------------------------------------

def test_zero_epochs_equals_initialization():
    res = fit(cfg(), [seq_for("chain5")], TrainConfig(epochs=0))
    init = SATA(cfg())
    assert res.steps == 0
    for name, p in init.named_parameters():
        assert np.array_equal(p.data, dict(res.model.named_parameters())[name].data), name


def test_fit_is_deterministic(tmp_path):
    ds = [seq_for("chain5"), seq_for("biped17")]
    tc = TrainConfig(epochs=3, batch_size=2, lr=1e-3, warmup_epochs=1, seed=5)
    paths = []
    for i in range(2):
        p = tmp_path / f"m{i}.ck"
        log = tmp_path / f"log{i}.jsonl"
        fit(cfg(dropout=0.1), ds, tc, log_path=log, checkpoint_path=p)
        paths.append((p, log))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
    rows = [json.loads(line) for line in paths[0][1].read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [0, 1, 2]
    assert {"loss", "rot", "pos", "kl", "lr", "steps"} <= set(rows[0])


def test_fit_loss_decreases():
    res = fit(cfg(), [seq_for("chain5", "sine_wave")], TrainConfig(epochs=40, lr=3e-3, warmup_epochs=2))
    assert res.history[-1]["loss"] < 0.5 * res.history[0]["loss"]


def test_fit_rvq_runs_and_max_steps():
    res = fit(cfg(bottleneck="rvq"), [seq_for("chain5")], TrainConfig(epochs=10, lr=1e-3), max_steps=3)
    assert res.steps == 3
    assert int(res.model.bottleneck.step.data) == 3


def test_nan_loss_raises():
    seq = seq_for("chain5")
    seq.dynamics.q[2, 1, 0] = np.nan
    with pytest.raises(NaNLoss):
        fit(cfg(), [seq], TrainConfig(epochs=1))


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDataset):
        fit(cfg(), [], TrainConfig(epochs=1))


def test_save_load_roundtrip(tmp_path):
    res = fit(cfg(bottleneck="rvq"), [seq_for("chain5")], TrainConfig(epochs=2, lr=1e-3))
    path = tmp_path / "m.ck"
    save_model(path, res.model, TrainConfig(epochs=2, lr=1e-3), LossWeights(), extra={"note": "x"})
    model, conf = load_model(path)
    assert conf["note"] == "x" and conf["train"]["epochs"] == 2
    batch = sequence_batch([seq_for("chain5")])
    np.testing.assert_array_equal(model.latent(batch), res.model.latent(batch))
    cfg_read, params = checkpoint.load(path)
    assert "bottleneck.codebooks" in params


def test_train_config_validation():
    with pytest.raises(InvalidConfig):
        TrainConfig(lr=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(lr_gamma=1.5)
