"""Deterministic mini-batch training with warmup, clipped SGD, per-epoch
evaluation, and bit-reproducible checkpoints.

The optimizer is plain gradient descent with global-norm clipping at
1.0; the learning rate ramps linearly over the warmup steps and stays
constant afterward. Identical configs and seeds give byte-identical
checkpoints and logs.
"""

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import tensor as T
from .corpus import Corpus, RubricSpec, Vocab, build_vocab, make_batches
from .encoder import EncoderConfig
from .errors import (ConfigError, CorruptionError, NumericAbort, ShapeError,
                     UnsupportedVersionError)
from .heads import LossWeights, combined_loss, cross_entropy_batch, mse, nt_xent
from .metrics import evaluate_corpus
from .model import (Model, build_model, forward_heads, forward_reprs,
                    predict_records, tokenize_records)
from .tensor import Tensor

CHECKPOINT_VERSION = "1.0"
CLIP_NORM = 1.0


@dataclass(frozen=True)
class TrainConfig:
    num_train_epochs: int = 10
    batch_size: int = 16
    eval_batch_size: int = 16
    warmup_steps: int = 500
    learning_rate: float = 2e-5
    contrastive_batch_size: int = 128
    logging_steps: int = 10
    lambda1: float = 1.0
    lambda2: float = 0.1
    tau: float = 0.5
    seed: int = 0
    desk_scale: int = 1
    eval_strategy: str = "epoch"

    def __post_init__(self):
        for name in ("num_train_epochs", "batch_size", "eval_batch_size",
                     "warmup_steps", "contrastive_batch_size", "logging_steps",
                     "desk_scale"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive int, got {v!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.lambda2 > 0 and self.contrastive_batch_size < 2:
            raise ConfigError("contrastive_batch_size must be >= 2 when lambda2 > 0")
        if self.eval_strategy != "epoch":
            raise ConfigError(f"unsupported eval_strategy {self.eval_strategy!r}")
        LossWeights(lambda1=self.lambda1, lambda2=self.lambda2, tau=self.tau)

    def weights(self):
        return LossWeights(lambda1=self.lambda1, lambda2=self.lambda2, tau=self.tau)


TRAIN_PRESETS = {
    "roberta-style": dict(num_train_epochs=28, eval_batch_size=16, warmup_steps=500,
                          logging_steps=10, learning_rate=2e-5,
                          contrastive_batch_size=128),
    "distilbert-style": dict(num_train_epochs=22, eval_batch_size=64, warmup_steps=500,
                             logging_steps=10, learning_rate=2e-5,
                             contrastive_batch_size=130),
}


def preset_config(name, **overrides):
    """Named TrainConfig preset, optionally with field overrides."""
    if name not in TRAIN_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(TRAIN_PRESETS)}")
    merged = dict(TRAIN_PRESETS[name])
    merged.update(overrides)
    return TrainConfig(**merged)


def effective_config(cfg):
    """Apply the desk-scale divisor to epoch and warmup counts."""
    if cfg.desk_scale == 1:
        return cfg
    return replace(cfg,
                   num_train_epochs=max(1, round(cfg.num_train_epochs / cfg.desk_scale)),
                   warmup_steps=max(1, round(cfg.warmup_steps / cfg.desk_scale)),
                   desk_scale=1)


def lr_at(step, cfg):
    """Linear warmup to learning_rate, then constant."""
    if step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    return cfg.learning_rate


def optimizer_step(params, grads, lr, clip_norm=CLIP_NORM):
    """In-place p <- p - lr * clip(g) with global-norm clipping."""
    sq = 0.0
    for name in sorted(grads):
        g = grads[name]
        if g.shape != params[name].data.shape:
            raise ShapeError(f"gradient shape {g.shape} mismatches parameter "
                             f"{name} {params[name].data.shape}")
        sq += float(np.sum(g * g))
    norm = math.sqrt(sq)
    factor = lr if norm <= clip_norm else lr * (clip_norm / norm)
    for name in sorted(grads):
        p = params[name]
        p.data = p.data - factor * grads[name]
    return params


@dataclass
class EpochLog:
    epoch: int
    losses: object
    report: object


@dataclass
class TrainLog:
    rubric: RubricSpec
    entries: list = field(default_factory=list)

    def to_csv(self):
        out = io.StringIO()
        dims = self.rubric.dimensions
        out.write("epoch,ce,mse,contrastive,total,"
                  + ",".join(f"{d}_qwk" for d in dims) + "\n")
        for e in self.entries:
            by_dim = e.report.by_dimension()
            out.write(f"{e.epoch},{e.losses.ce!r},{e.losses.mse!r},"
                      f"{e.losses.contrastive!r},{e.losses.total!r},"
                      + ",".join(repr(by_dim[d].qwk) for d in dims) + "\n")
        return out.getvalue()


@dataclass
class Checkpoint:
    version: str
    step: int
    encoder_cfg: EncoderConfig
    rubric: RubricSpec
    vocab_tokens: list
    arrays: dict
    train_config: dict = None

    def to_model(self):
        params = {name: Tensor(arr.copy(), requires_grad=True)
                  for name, arr in self.arrays.items()}
        vocab = Vocab(self.vocab_tokens)
        return Model(cfg=self.encoder_cfg, rubric=self.rubric, vocab=vocab,
                     params=params)


def checkpoint_from_model(model, step, train_config=None):
    arrays = {name: p.data.copy() for name, p in model.params.items()}
    return Checkpoint(version=CHECKPOINT_VERSION, step=step,
                      encoder_cfg=model.cfg, rubric=model.rubric,
                      vocab_tokens=list(model.vocab.tokens), arrays=arrays,
                      train_config=train_config)


def save_checkpoint(ckpt, path):
    """One-line JSON header plus little-endian float64 payload."""
    names = sorted(ckpt.arrays)
    chunks, tensors, offset = [], [], 0
    for name in names:
        arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f8")
        raw = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "version": ckpt.version,
        "checksum": hashlib.sha256(payload).hexdigest(),
        "payload_bytes": len(payload),
        "step": ckpt.step,
        "encoder": {f.name: getattr(ckpt.encoder_cfg, f.name)
                    for f in fields(EncoderConfig)},
        "rubric": {"name": ckpt.rubric.name,
                   "dimensions": list(ckpt.rubric.dimensions),
                   "bands": list(ckpt.rubric.bands)},
        "vocab": ckpt.vocab_tokens,
        "train_config": ckpt.train_config,
        "tensors": tensors,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=True).encode())
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise CorruptionError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl])
    except json.JSONDecodeError as e:
        raise CorruptionError(f"{path}: unreadable header: {e}") from None
    version = header.get("version", "")
    if version.split(".")[0] != CHECKPOINT_VERSION.split(".")[0]:
        raise UnsupportedVersionError(
            f"{path}: checkpoint version {version!r}, supported {CHECKPOINT_VERSION}")
    payload = blob[nl + 1:]
    if len(payload) != header["payload_bytes"]:
        raise CorruptionError(f"{path}: payload is {len(payload)} bytes, "
                              f"header says {header['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise CorruptionError(f"{path}: payload checksum mismatch")
    arrays = {}
    for spec in header["tensors"]:
        size = int(np.prod(spec["shape"])) * 8 if spec["shape"] else 8
        start = spec["offset"]
        arr = np.frombuffer(payload[start:start + size], dtype="<f8")
        arrays[spec["name"]] = arr.reshape(spec["shape"]).copy()
    rub = header["rubric"]
    return Checkpoint(
        version=version,
        step=header["step"],
        encoder_cfg=EncoderConfig(**header["encoder"]),
        rubric=RubricSpec(name=rub["name"], dimensions=tuple(rub["dimensions"]),
                          bands=tuple(rub["bands"])),
        vocab_tokens=list(header["vocab"]),
        arrays=arrays,
        train_config=header.get("train_config"),
    )


def _gold_arrays(records, rubric):
    idx = {dim: np.array([rubric.band_index(r.scores[dim]) for r in records],
                         dtype=np.int64) for dim in rubric.dimensions}
    values = np.array([[r.scores[dim] for dim in rubric.dimensions]
                       for r in records])
    return idx, values


def _contrastive_term(model, batch, essays, prompts, tau):
    """NT-Xent over the paired subset of a contrastive batch, or None."""
    if not batch.pairs:
        return None
    reprs = forward_reprs(model,
                          [essays[i] for i in batch.indices],
                          [prompts[i] for i  in batch.indices])
    flat = [i for pair in batch.pairs for i in pair]
    sub = T.gather_rows(reprs, np.asarray(flat, dtype=np.int64))
    pairs = [(2 * k, 2 * k + 1) for k in range(len(batch.pairs))]
    return nt_xent(sub, pairs, tau)


def train(cfg, train_corpus, eval_corpus, encoder_cfg=None, model_id="model"):
    """Full training run; returns (Checkpoint, TrainLog).

    The vocabulary comes from the training split only. Evaluation runs
    after every epoch on a no-graph forward pass. A non-finite loss
    aborts with the offending epoch, step, and batch named.
    """
    if train_corpus.rubric != eval_corpus.rubric:
        raise ConfigError("train and eval corpora use different rubrics")
    eff = effective_config(cfg)
    weights = eff.weights()
    rubric = train_corpus.rubric
    encoder_cfg = encoder_cfg or EncoderConfig(vocab_size=8192)
    vocab = build_vocab(train_corpus, max_size=encoder_cfg.vocab_size)
    encoder_cfg = replace(encoder_cfg, vocab_size=len(vocab))
    model = build_model(rubric, vocab, encoder_cfg, seed=eff.seed)

    essays, prompts = tokenize_records(train_corpus.records, vocab, encoder_cfg)
    gold_idx, gold_values = _gold_arrays(train_corpus.records, rubric)

    log = TrainLog(rubric=rubric)
    step = 0
    pair_queue = []
    pair_seed = eff.seed + 7919
    for epoch in range(1, eff.num_train_epochs + 1):
        batches = make_batches(train_corpus, eff.batch_size, seed=eff.seed + epoch)
        sums = np.zeros(3)
        counted = 0
        for bno, batch in enumerate(batches):
            rows = np.asarray(batch.indices, dtype=np.int64)
            reprs = forward_reprs(model,
                                  [essays[i] for i in rows],
                                  [prompts[i] for i in rows])
            logits, reg = forward_heads(model, reprs)
            ce_t = cross_entropy_batch(
                logits, {d: gold_idx[d][rows] for d in rubric.dimensions})
            mse_t = mse(reg, gold_values[rows])
            total_t = ce_t
            if weights.lambda1 > 0:
                total_t = T.add(total_t, T.scale(mse_t, weights.lambda1))
            contr_v = 0.0
            if weights.lambda2 > 0:
                if not pair_queue:
                    pair_queue = make_batches(train_corpus, eff.contrastive_batch_size,
                                              seed=pair_seed, pair_by_prompt=True)
                    pair_seed += 1
                contr_t = _contrastive_term(model, pair_queue.pop(0),
                                            essays, prompts, weights.tau)
                if contr_t is not None:
                    contr_v = float(contr_t.data)
                    total_t = T.add(total_t, T.scale(contr_t, weights.lambda2))
            ce_v, mse_v = float(ce_t.data), float(mse_t.data)
            if not all(map(math.isfinite, (ce_v, mse_v, contr_v))):
                raise NumericAbort(f"non-finite loss at epoch {epoch} step {step} "
                                   f"batch {bno}: ce={ce_v} mse={mse_v} "
                                   f"contrastive={contr_v}")
            for p in model.params.values():
                p.grad = None
            T.backward(total_t)
            grads = {name: p.grad for name, p in model.params.items()
                     if p.grad is not None}
            optimizer_step(model.params, grads, lr_at(step, eff))
            step += 1
            sums += len(rows) * np.array([ce_v, mse_v, contr_v])
            counted += len(rows)
        mean_ce, mean_mse, mean_contr = (sums / counted).tolist()
        preds = predict_records(model, eval_corpus.records,
                                batch_size=eff.eval_batch_size)
        report = evaluate_corpus(preds, eval_corpus, rubric,
                                 corpus_id="eval", model_id=model_id)
        log.entries.append(EpochLog(
            epoch=epoch,
            losses=combined_loss(mean_ce, mean_mse, mean_contr, weights),
            report=report))
    ckpt = checkpoint_from_model(model, step, train_config=_config_dict(cfg))
    return ckpt, log


def _config_dict(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(TrainConfig)}
