"""Full scoring model: shared encoder plus per-dimension heads.

All learnable tensors live in one flat name-to-Tensor dict so the
optimizer and checkpoint code can treat them uniformly. The combined
representation fed to every head is [essay_cls, prompt_cls]; essays
without a prompt get zeros in the second half.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Vocab
from .encoder import EncoderConfig, combine_repr, encode_batch, init_params, tokenize
from .heads import (classify_batch, init_head_params, predict_scores_batch,
                    regress_batch)
from .tensor import Tensor


@dataclass
class Model:
    cfg: EncoderConfig
    rubric: object
    vocab: Vocab
    params: dict

    @property
    def repr_width(self):
        return 2 * self.cfg.d_model


def build_model(rubric, vocab, cfg, seed):
    params = init_params(cfg, seed)
    params.update(init_head_params(rubric, 2 * cfg.d_model, seed + 1))
    return Model(cfg=cfg, rubric=rubric, vocab=vocab, params=params)


def tokenize_records(records, vocab, cfg):
    """Precompute (essay_ids, prompt_ids_or_None) for a record list."""
    essays = [tokenize(r.full_text, vocab, cfg.max_seq_len) for r in records]
    prompts = [tokenize(r.prompt, vocab, cfg.max_seq_len) if r.prompt else None
               for r in records]
    return essays, prompts


def forward_reprs(model, essay_seqs, prompt_seqs):
    """Combined [n, 2*d_model] representations for a batch.

    Duplicate prompts are encoded once and shared through a gather, so
    gradients still reach the encoder from every copy.
    """
    cls = encode_batch(essay_seqs, model.params, model.cfg)
    n, d = len(essay_seqs), model.cfg.d_model
    uniq, where = [], {}
    idx = np.empty(n, dtype=np.int64)
    for i, seq in enumerate(prompt_seqs):
        if seq is None:
            idx[i] = -1
            continue
        key = seq.tobytes()
        if key not in where:
            where[key] = len(uniq)
            uniq.append(seq)
        idx[i] = where[key]
    if uniq:
        enc = encode_batch(uniq, model.params, model.cfg)
        ext = T.concat([enc, Tensor(np.zeros((1, d)))], axis=0)
        idx[idx < 0] = len(uniq)
        additional = T.gather_rows(ext, idx)
    else:
        additional = Tensor(np.zeros((n, d)))
    return combine_repr(cls, additional)


def forward_heads(model, reprs):
    """(logits per dimension, regression matrix) for combined reprs."""
    return (classify_batch(reprs, model.params, model.rubric),
            regress_batch(reprs, model.params, model.rubric))


def predict_records(model, records, batch_size=32):
    """id -> DimensionScores for a record list, evaluated without a graph."""
    out = {}
    with T.no_grad():
        essays, prompts = tokenize_records(records, model.vocab, model.cfg)
        for lo in range(0, len(records), batch_size):
            hi = min(lo + batch_size, len(records))
            reprs = forward_reprs(model, essays[lo:hi], prompts[lo:hi])
            logits, reg = forward_heads(model, reprs)
            scored = predict_scores_batch(logits, reg, model.rubric)
            for rec, s in zip(records[lo:hi], scored):
                out[rec.id] = s
    return out


def score_text(model, text, prompt=None):
    """DimensionScores for one essay string, optionally with its prompt."""
    from .heads import predict_scores
    with T.no_grad():
        essay = tokenize(text, model.vocab, model.cfg.max_seq_len)
        pseq = tokenize(prompt, model.vocab, model.cfg.max_seq_len) if prompt else None
        reprs = forward_reprs(model, [essay], [pseq])
        logits, reg = forward_heads(model, reprs)
        row_logits = {dim: logits[dim].data[0] for dim in model.rubric.dimensions}
        return predict_scores(row_logits, reg.data[0], model.rubric)
