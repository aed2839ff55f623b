import numpy as np
import pytest

from uwenhance import models
from uwenhance.checkpoint import (Checkpoint, load_checkpoint, restore_bundle,
                                  save_checkpoint)
from uwenhance.config import RunConfig
from uwenhance.errors import DataError, UsageError

rng = np.random.default_rng(13)


def small_bundle(seed=0):
    cfg = models.PipelineConfig(
        structure=models.StructureNetConfig(levels=1, base_channels=8))
    return models.build_bundle(cfg, seed=seed)


def test_config_round_trip_defaults():
    cfg = RunConfig()
    text = cfg.to_json()
    back = RunConfig.from_json(text)
    assert back.to_json() == text


def test_config_defaults_match_stated_hyperparameters():
    d = RunConfig().to_dict()
    t = d["train"]
    assert t["batch_size"] == 4
    assert t["lr_structure"] == 0.0005
    assert t["lr_detail"] == 0.00002
    assert (t["lambda1"], t["lambda2"], t["lambda3"], t["alpha"]) == (0.5, 1, 1, 0.5)
    assert t["critic_steps_per_gen"] == 5
    assert len(d["synth"]["water_types"]) == 6
    assert len(d["synth"]["light_levels"]) == 6
    assert d["metrics"]["uiqm_coeffs"] == [0.0282, 0.2953, 3.5753]
    assert d["metrics"]["uciqe_coeffs"] == [0.4680, 0.2745, 0.2576]


def test_config_rejects_unknown_keys():
    data = RunConfig().to_dict()
    data["train"]["learning_rate"] = 0.1
    with pytest.raises(UsageError, match="train.learning_rate"):
        RunConfig.from_dict(data)
    data2 = RunConfig().to_dict()
    data2["extra_section"] = {}
    with pytest.raises(UsageError, match="extra_section"):
        RunConfig.from_dict(data2)


def test_config_bad_version():
    data = RunConfig().to_dict()
    data["version"] = 99
    with pytest.raises(UsageError, match="version"):
        RunConfig.from_dict(data)


def test_config_partial_document_uses_defaults():
    cfg = RunConfig.from_json('{"train": {"batch_size": 2}}')
    assert cfg.train.batch_size == 2
    assert cfg.train.lr_structure == 0.0005


def test_checkpoint_round_trip_bitwise(tmp_path):
    bundle = small_bundle(seed=3)
    # nonzero optimizer state to prove it round-trips too
    for p in bundle.parameters():
        p.state = rng.uniform(0, 1, size=p.t.shape).astype(np.float32)
    path = tmp_path / "model.ckpt"
    cfg_text = RunConfig().to_json()
    save_checkpoint(path, bundle, epoch=4, seed=3, config_text=cfg_text)
    ckpt = load_checkpoint(path)
    assert ckpt.epoch == 4 and ckpt.seed == 3
    assert ckpt.config_text == cfg_text
    for p in bundle.parameters():
        values, state = ckpt.params[p.name]
        assert values.tobytes() == p.t.data.tobytes()
        assert state.tobytes() == p.state.tobytes()


def test_checkpoint_restore_into_fresh_bundle(tmp_path):
    bundle = small_bundle(seed=5)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, bundle, epoch=0, seed=5, config_text="{}")
    other = small_bundle(seed=99)
    restore_bundle(other, load_checkpoint(path))
    for p, q in zip(bundle.parameters(), other.parameters()):
        assert np.array_equal(p.t.data, q.t.data)


def test_checkpoint_corruption_fails_closed(tmp_path):
    bundle = small_bundle()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, bundle, epoch=0, seed=0, config_text="{}")
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="checksum"):
        load_checkpoint(path)


def test_checkpoint_bad_magic_and_version(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(path)
    bundle = small_bundle()
    good = tmp_path / "good.ckpt"
    save_checkpoint(good, bundle, epoch=0, seed=0, config_text="{}")
    raw = bytearray(good.read_bytes())
    raw[4] = 9  # version field
    bad = tmp_path / "badver.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="version"):
        load_checkpoint(bad)


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    bundle = small_bundle()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, bundle, epoch=0, seed=0, config_text="{}")
    ckpt = load_checkpoint(path)
    other = models.build_bundle(models.PipelineConfig(
        structure=models.StructureNetConfig(levels=2, base_channels=8)), seed=0)
    with pytest.raises(DataError):
        restore_bundle(other, ckpt)
