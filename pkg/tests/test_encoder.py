"""Encoder: tokenization, masking, pooling, and gradient flow."""

import numpy as np
import pytest

from dimscore import tensor as T
from dimscore.corpus import Corpus, EssayRecord, RubricSpec, Vocab, build_vocab
from dimscore.encoder import (EncoderConfig, combine_repr, encode,
                              encode_additional, encode_batch, init_params,
                              sinusoidal_positions, tokenize)
from dimscore.errors import ConfigError, DataError, ShapeError


def _vocab(words):
    corpus = Corpus(
        rubric=RubricSpec(name="r", dimensions=("q",), bands=(1.0, 2.0)),
        records=[EssayRecord(id="a", full_text=" ".join(words),
                             scores={"q": 1.0})])
    return build_vocab(corpus, max_size=64)


def test_tokenize_prefixes_cls_and_truncates():
    v = _vocab(["red", "fox", "ran", "far"])
    seq = tokenize("red fox ran", v, max_seq_len=8)
    assert seq[0] == Vocab.CLS
    assert len(seq) == 4
    short = tokenize("red fox ran far red fox", v, max_seq_len=4)
    assert len(short) == 4  # CLS + 3 words


def test_tokenize_empty_warns_but_returns_cls():
    v = _vocab(["red"])
    with pytest.warns(RuntimeWarning):
        seq = tokenize("", v, max_seq_len=8)
    assert list(seq) == [Vocab.CLS]


def test_case_folding_shares_one_id():
    v = _vocab(["the"])
    seq = tokenize("The the THE", v, 8)
    assert seq[1] == seq[2] == seq[3] == v.lookup("the")


def test_unknown_words_map_to_unk():
    v = _vocab(["red", "fox"])
    seq = tokenize("red zebra", v, max_seq_len=8)
    assert seq[1] == v.lookup("red")
    assert seq[2] == Vocab.UNK


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(vocab_size=10, d_model=10, n_heads=3)  # 10 % 3 != 0
    with pytest.raises(ConfigError):
        EncoderConfig(vocab_size=0)


def test_sinusoidal_positions_match_formula():
    pos = sinusoidal_positions(6, 8)
    expect = np.zeros((6, 8))
    for p in range(6):
        for i in range(4):
            angle = p / (10000.0 ** (2 * i / 8))
            expect[p, 2 * i] = np.sin(angle)
            expect[p, 2 * i + 1] = np.cos(angle)
    assert np.max(np.abs(pos - expect)) < 1e-15


def test_padding_does_not_change_cls():
    v = _vocab(["red", "fox", "ran", "far", "away", "home"])
    cfg = EncoderConfig(vocab_size=len(v), max_seq_len=12, d_model=16,
                        n_layers=2, n_heads=2, d_ff=24)
    params = init_params(cfg, seed=0)
    short = tokenize("red fox", v, cfg.max_seq_len)
    long = tokenize("red fox ran far away home", v, cfg.max_seq_len)
    alone = encode_batch([short], params, cfg).data
    padded = encode_batch([short, long], params, cfg).data[:1]
    assert np.array_equal(alone, padded)


def test_depth_zero_cls_ignores_essay_body():
    v = _vocab(["red", "fox", "ran"])
    cfg = EncoderConfig(vocab_size=len(v), max_seq_len=8, d_model=8,
                        n_layers=0, n_heads=2, d_ff=16)
    params = init_params(cfg, seed=1)
    a = encode(tokenize("red fox", v, 8), params, cfg).data
    b = encode(tokenize("ran ran ran", v, 8), params, cfg).data
    assert np.array_equal(a, b)


def test_out_of_range_token_id_names_position():
    cfg = EncoderConfig(vocab_size=5, max_seq_len=8, d_model=8, n_layers=1,
                        n_heads=2, d_ff=16)
    params = init_params(cfg, seed=0)
    with pytest.raises(DataError, match="position 2"):
        encode_batch([np.array([1, 3, 99], dtype=np.int64)], params, cfg)


def test_combine_repr_widths():
    a = T.Tensor(np.ones((2, 4)))
    b = T.Tensor(np.zeros((2, 4)))
    z = combine_repr(a, b)
    assert z.shape == (2, 8)
    with pytest.raises(ShapeError):
        combine_repr(a, T.Tensor(np.zeros((3, 4))))


def test_additional_encoder_shares_weights():
    v = _vocab(["red", "fox"])
    cfg = EncoderConfig(vocab_size=len(v), max_seq_len=8, d_model=8,
                        n_layers=1, n_heads=2, d_ff=16)
    params = init_params(cfg, seed=2)
    seq = tokenize("red fox", v, 8)
    essay_cls = encode(seq, params, cfg).data
    prompt_cls = encode_additional("red fox", v, params, cfg).data
    assert np.array_equal(essay_cls.ravel(), prompt_cls.ravel())


def test_encoder_gradients_against_central_difference():
    v = _vocab(["red", "fox", "ran", "far"])
    cfg = EncoderConfig(vocab_size=len(v), max_seq_len=8, d_model=8,
                        n_layers=1, n_heads=2, d_ff=12)
    params = init_params(cfg, seed=3)
    seqs = [tokenize("red fox ran", v, 8), tokenize("far far", v, 8)]
    probe = np.linspace(-0.5, 0.5, cfg.d_model)

    def build():
        out = encode_batch(seqs, params, cfg)
        return T.tsum(T.mul(out, T.Tensor(probe)))

    leaves = [params[k] for k in sorted(params)]
    err = T.grad_check_leaves(build, leaves, step=1e-5, max_coords=4, seed=0)
    assert err < 1e-6
