"""Trainer: schedule, clipped SGD, presets, checkpoints, abort handling."""

import json
import math

import numpy as np
import pytest

from dimscore.corpus import ellipse_style
from dimscore.encoder import EncoderConfig
from dimscore.errors import (ConfigError, CorruptionError, NumericAbort,
                             ShapeError, UnsupportedVersionError)
from dimscore.model import predict_records
from dimscore.synth import synth_corpus
from dimscore.tensor import Tensor
from dimscore.trainer import (CLIP_NORM, TRAIN_PRESETS, TrainConfig,
                              effective_config, load_checkpoint, lr_at,
                              optimizer_step, preset_config, save_checkpoint,
                              train)

TINY_ENC = EncoderConfig(vocab_size=512, max_seq_len=32, d_model=16,
                         n_layers=1, n_heads=2, d_ff=32)


def tiny_cfg(**over):
    base = dict(num_train_epochs=2, batch_size=4, eval_batch_size=8,
                warmup_steps=5, learning_rate=0.1, contrastive_batch_size=8,
                lambda1=0.1, lambda2=0.1, tau=0.5, seed=0)
    base.update(over)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_corpus():
    return synth_corpus(12, ellipse_style(), seed=0)


@pytest.fixture(scope="module")
def tiny_run(tiny_corpus):
    return train(tiny_cfg(), tiny_corpus, tiny_corpus, encoder_cfg=TINY_ENC)


def test_lr_warmup_schedule():
    cfg = TrainConfig(warmup_steps=500, learning_rate=2e-5)
    assert lr_at(0, cfg) == pytest.approx(4e-8, rel=1e-12)
    assert lr_at(250, cfg) == pytest.approx(1.004e-5, rel=1e-12)
    assert lr_at(499, cfg) == pytest.approx(2e-5, rel=1e-12)
    assert lr_at(500, cfg) == 2e-5
    assert lr_at(10 ** 9, cfg) == 2e-5


def test_lr_is_monotone_through_warmup():
    cfg = TrainConfig(warmup_steps=37, learning_rate=0.3)
    vals = [lr_at(s, cfg) for s in range(40)]
    assert all(a < b for a, b in zip(vals, vals[1:36]))
    assert vals[36] == vals[37] == 0.3


def test_optimizer_step_no_clip():
    p = {"w": Tensor(np.array([1.0, 2.0]), requires_grad=True)}
    g = {"w": np.array([0.3, 0.4])}  # norm 0.5, under the clip
    optimizer_step(p, g, lr=0.1)
    expected = np.array([1.0, 2.0]) - 0.1 * np.array([0.3, 0.4])
    assert np.array_equal(p["w"].data, expected)


def test_optimizer_step_clips_global_norm():
    p = {"w": Tensor(np.array([1.0, 2.0]), requires_grad=True)}
    g = {"w": np.array([3.0, 4.0])}  # norm 5
    optimizer_step(p, g, lr=0.1)
    factor = 0.1 * (CLIP_NORM / 5.0)
    expected = np.array([1.0, 2.0]) - factor * np.array([3.0, 4.0])
    assert np.array_equal(p["w"].data, expected)


def test_optimizer_step_norm_is_global_across_params():
    p = {"a": Tensor(np.zeros(1), requires_grad=True),
         "b": Tensor(np.zeros(1), requires_grad=True)}
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    optimizer_step(p, g, lr=1.0)
    factor = 1.0 * (CLIP_NORM / math.sqrt(3.0 ** 2 + 4.0 ** 2))
    assert np.array_equal(p["a"].data, -factor * np.array([3.0]))
    assert np.array_equal(p["b"].data, -factor * np.array([4.0]))


def test_optimizer_step_shape_mismatch():
    p = {"w": Tensor(np.zeros(2), requires_grad=True)}
    with pytest.raises(ShapeError):
        optimizer_step(p, {"w": np.zeros(3)}, lr=0.1)


def test_presets_match_published_settings():
    rob = preset_config("roberta-style")
    assert (rob.num_train_epochs, rob.eval_batch_size, rob.warmup_steps,
            rob.logging_steps, rob.learning_rate,
            rob.contrastive_batch_size) == (28, 16, 500, 10, 2e-5, 128)
    dis = preset_config("distilbert-style")
    assert (dis.num_train_epochs, dis.eval_batch_size, dis.warmup_steps,
            dis.logging_steps, dis.learning_rate,
            dis.contrastive_batch_size) == (22, 64, 500, 10, 2e-5, 130)
    assert set(TRAIN_PRESETS) == {"roberta-style", "distilbert-style"}
    with pytest.raises(ConfigError):
        preset_config("bert-style")


def test_preset_overrides():
    cfg = preset_config("roberta-style", num_train_epochs=3, seed=9)
    assert cfg.num_train_epochs == 3
    assert cfg.seed == 9
    assert cfg.warmup_steps == 500


def test_desk_scale_divides_epochs_and_warmup():
    cfg = preset_config("roberta-style", desk_scale=10)
    eff = effective_config(cfg)
    assert eff.num_train_epochs == 3  # round(28 / 10)
    assert eff.warmup_steps == 50
    assert eff.desk_scale == 1
    assert eff.learning_rate == cfg.learning_rate
    floor = effective_config(TrainConfig(num_train_epochs=2, desk_scale=1000))
    assert floor.num_train_epochs == 1
    assert floor.warmup_steps == 1
    same = TrainConfig()
    assert effective_config(same) is same


@pytest.mark.parametrize("bad", [
    dict(num_train_epochs=0),
    dict(batch_size=-1),
    dict(batch_size=2.5),
    dict(warmup_steps=0),
    dict(learning_rate=0.0),
    dict(learning_rate=float("inf")),
    dict(learning_rate=float("nan")),
    dict(lambda1=-0.1),
    dict(tau=0.0),
    dict(lambda2=0.5, contrastive_batch_size=1),
    dict(eval_strategy="steps"),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        TrainConfig(**bad)


def test_train_smoke_log_shape(tiny_run, tiny_corpus):
    ckpt, log = tiny_run
    assert len(log.entries) == 2
    assert ckpt.step == 6  # 12 essays / batch 4 * 2 epochs
    for e in log.entries:
        for v in (e.losses.ce, e.losses.mse, e.losses.contrastive,
                  e.losses.total):
            assert math.isfinite(v)
        assert set(e.report.by_dimension()) == set(ellipse_style().dimensions)
    lines = log.to_csv().splitlines()
    assert lines[0] == ("epoch,ce,mse,contrastive,total,cohesion_qwk,"
                        "syntax_qwk,vocabulary_qwk,phraseology_qwk,"
                        "grammar_qwk,conventions_qwk")
    assert len(lines) == 3
    assert lines[1].startswith("1,")


def test_checkpoint_round_trip(tiny_run, tmp_path):
    ckpt, _ = tiny_run
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert back.version == ckpt.version
    assert back.step == ckpt.step
    assert back.encoder_cfg == ckpt.encoder_cfg
    assert back.rubric == ckpt.rubric
    assert back.vocab_tokens == ckpt.vocab_tokens
    assert back.train_config == ckpt.train_config
    assert set(back.arrays) == set(ckpt.arrays)
    for name, arr in ckpt.arrays.items():
        assert np.array_equal(back.arrays[name], arr)


def test_loaded_model_predicts_identically(tiny_run, tiny_corpus, tmp_path):
    ckpt, _ = tiny_run
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    a = predict_records(ckpt.to_model(), tiny_corpus.records)
    b = predict_records(load_checkpoint(path).to_model(), tiny_corpus.records)
    assert a == b


def test_checkpoints_are_byte_identical_across_reruns(tiny_corpus, tiny_run,
                                                      tmp_path):
    ckpt1, log1 = tiny_run
    ckpt2, log2 = train(tiny_cfg(), tiny_corpus, tiny_corpus,
                        encoder_cfg=TINY_ENC)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt1, p1)
    save_checkpoint(ckpt2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert log1.to_csv() == log2.to_csv()


def test_seed_changes_checkpoint(tiny_corpus, tiny_run, tmp_path):
    ckpt1, _ = tiny_run
    ckpt2, _ = train(tiny_cfg(seed=1), tiny_corpus, tiny_corpus,
                     encoder_cfg=TINY_ENC)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt1, p1)
    save_checkpoint(ckpt2, p2)
    assert p1.read_bytes() != p2.read_bytes()


def test_corrupt_payload_byte_rejected(tiny_run, tmp_path):
    ckpt, _ = tiny_run
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptionError, match="checksum"):
        load_checkpoint(path)


def test_truncated_checkpoint_rejected(tiny_run, tmp_path):
    ckpt, _ = tiny_run
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])
    with pytest.raises(CorruptionError, match="bytes"):
        load_checkpoint(path)


def test_garbage_header_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"not json\n\x00\x01")
    with pytest.raises(CorruptionError, match="header"):
        load_checkpoint(path)
    path.write_bytes(b"{}")  # no newline at all
    with pytest.raises(CorruptionError, match="header"):
        load_checkpoint(path)


def test_version_gate(tiny_run, tmp_path):
    ckpt, _ = tiny_run
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    blob = path.read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl])

    header["version"] = "2.0"
    path.write_bytes(json.dumps(header, sort_keys=True).encode() + blob[nl:])
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(path)

    header["version"] = "1.7"  # minor bumps stay loadable
    path.write_bytes(json.dumps(header, sort_keys=True).encode() + blob[nl:])
    assert load_checkpoint(path).version == "1.7"


def test_rubric_mismatch_rejected(tiny_corpus):
    other = synth_corpus(12, "ielts-style", seed=0)
    with pytest.raises(ConfigError):
        train(tiny_cfg(), tiny_corpus, other, encoder_cfg=TINY_ENC)


def test_divergence_aborts_with_location(tiny_corpus):
    cfg = tiny_cfg(num_train_epochs=3, warmup_steps=1, learning_rate=1e200,
                   lambda2=0.0)
    with np.errstate(all="ignore"):
        with pytest.raises(NumericAbort, match=r"epoch \d+ step \d+"):
            train(cfg, tiny_corpus, tiny_corpus, encoder_cfg=TINY_ENC)
