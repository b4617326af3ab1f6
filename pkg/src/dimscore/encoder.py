"""Miniature pre-norm transformer encoder trained from scratch.

Essays and prompts are tokenized to ids, embedded with sinusoidal
position encodings, and run through n_layers of self-attention plus
feed-forward blocks. The pooled representation is the output at the
reserved CLS position (position 0). Prompt text goes through the same
weights; combine_repr concatenates the two vectors into the double-width
representation consumed by the scoring heads and the contrastive loss.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Vocab, word_tokens
from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor

NEG_INF = -1e30


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    max_seq_len: int = 256
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128

    def __post_init__(self):
        for name in ("vocab_size", "max_seq_len", "d_model", "n_layers", "n_heads", "d_ff"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < (0 if name == "n_layers" else 1):
                raise ConfigError(f"{name} must be a positive int, got {v!r}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.max_seq_len < 2:
            raise ConfigError("max_seq_len must be at least 2")


@dataclass
class EncoderOutput:
    cls: Tensor
    additional: Tensor = None


def init_params(cfg, seed):
    """Seeded parameter dict; insertion order is the canonical order."""
    rng = np.random.default_rng(seed)
    d, ff = cfg.d_model, cfg.d_ff

    def mat(rows, cols):
        std = np.sqrt(2.0 / (rows + cols))
        return Tensor(rng.normal(0.0, std, size=(rows, cols)), requires_grad=True)

    params = {}
    params["embed.tok"] = Tensor(
        rng.normal(0.0, 1.0 / np.sqrt(d), size=(cfg.vocab_size, d)), requires_grad=True)
    for i in range(cfg.n_layers):
        p = f"layer{i}"
        params[f"{p}.ln1.gain"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{p}.ln1.bias"] = Tensor(np.zeros(d), requires_grad=True)
        for nm in ("wq", "wk", "wv", "wo"):
            params[f"{p}.attn.{nm}"] = mat(d, d)
            params[f"{p}.attn.{nm.replace('w', 'b')}"] = Tensor(np.zeros(d), requires_grad=True)
        params[f"{p}.ln2.gain"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{p}.ln2.bias"] = Tensor(np.zeros(d), requires_grad=True)
        params[f"{p}.ff.w1"] = mat(d, ff)
        params[f"{p}.ff.b1"] = Tensor(np.zeros(ff), requires_grad=True)
        params[f"{p}.ff.w2"] = mat(ff, d)
        params[f"{p}.ff.b2"] = Tensor(np.zeros(d), requires_grad=True)
    params["ln_f.gain"] = Tensor(np.ones(d), requires_grad=True)
    params["ln_f.bias"] = Tensor(np.zeros(d), requires_grad=True)
    return params


def sinusoidal_positions(length, d_model):
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / d_model)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return np.ascontiguousarray(enc)


def tokenize(text, vocab, max_seq_len):
    """CLS-prefixed id sequence, truncated to max_seq_len total."""
    words = word_tokens(text)
    if not words:
        warnings.warn("tokenize: empty text, emitting a lone CLS marker", RuntimeWarning)
    ids = [Vocab.CLS] + [vocab.lookup(w) for w in words[: max_seq_len - 1]]
    return np.asarray(ids, dtype=np.int64)


def _attention(x, params, prefix, cfg, mask):
    n, L, d = x.shape
    heads, dh = cfg.n_heads, cfg.d_model // cfg.n_heads

    def proj(nm):
        w = params[f"{prefix}.attn.w{nm}"]
        b = params[f"{prefix}.attn.b{nm}"]
        y = T.add(T.matmul(x, w), b)
        return T.swapaxes(T.reshape(y, (n, L, heads, dh)), 1, 2)

    q, k, v = proj("q"), proj("k"), proj("v")
    scores = T.scale(T.matmul(q, T.swapaxes(k, 2, 3)), 1.0 / np.sqrt(dh))
    scores = T.add(scores, mask)
    ctx = T.matmul(T.softmax(scores), v)
    ctx = T.reshape(T.swapaxes(ctx, 1, 2), (n, L, d))
    return T.add(T.matmul(ctx, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])


def encode_batch(token_seqs, params, cfg):
    """Pooled CLS representations for a batch of id sequences: [n, d_model]."""
    n = len(token_seqs)
    if n == 0:
        raise ShapeError("encode_batch: empty batch")
    lengths = [len(s) for s in token_seqs]
    L = max(lengths)
    if L > cfg.max_seq_len:
        raise DataError(f"sequence length {L} exceeds max_seq_len {cfg.max_seq_len}")
    ids = np.full((n, L), Vocab.PAD, dtype=np.int64)
    for r, seq in enumerate(token_seqs):
        seq = np.asarray(seq, dtype=np.int64)
        bad = np.nonzero((seq < 0) | (seq >= cfg.vocab_size))[0]
        if bad.size:
            raise DataError(
                f"token id {seq[bad[0]]} out of range at position {bad[0]} of sequence {r}")
        ids[r, : lengths[r]] = seq
    mask_np = np.zeros((n, 1, 1, L))
    for r, ln in enumerate(lengths):
        mask_np[r, :, :, ln:] = NEG_INF
    mask = Tensor(mask_np)

    emb = T.reshape(T.gather_rows(params["embed.tok"], ids.ravel()), (n, L, cfg.d_model))
    x = T.add(emb, Tensor(sinusoidal_positions(L, cfg.d_model)))
    for i in range(cfg.n_layers):
        p = f"layer{i}"
        h = T.layer_norm(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        x = T.add(x, _attention(h, params, p, cfg, mask))
        h = T.layer_norm(x, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
        ff = T.add(T.matmul(T.gelu(T.add(T.matmul(h, params[f"{p}.ff.w1"]),
                                         params[f"{p}.ff.b1"])),
                            params[f"{p}.ff.w2"]),
                   params[f"{p}.ff.b2"])
        x = T.add(x, ff)
    x = T.layer_norm(x, params["ln_f.gain"], params["ln_f.bias"])
    return T.take_axis1(x, 0)


def encode(tokens, params, cfg):
    """Pooled representation of one id sequence: Tensor[d_model]."""
    return T.reshape(encode_batch([tokens], params, cfg), (cfg.d_model,))


def encode_additional(prompt, vocab, params, cfg):
    """Encode prompt text with the shared encoder weights."""
    return encode(tokenize(prompt, vocab, cfg.max_seq_len), params, cfg)


def combine_repr(cls, additional):
    """Concatenate essay and prompt representations along the last axis."""
    if cls.shape[-1] != additional.shape[-1] or cls.ndim != additional.ndim:
        raise ShapeError(
            f"combine_repr: widths differ, {cls.shape} vs {additional.shape}")
    return T.concat([cls, additional], axis=cls.ndim - 1)
