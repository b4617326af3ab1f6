"""Self-check suites comparing analytic gradients to central differences.

Two suites: `op_suite` exercises each primitive in isolation, and
`model_suite` differentiates the full three-term loss through a small
model on a real batch. Both return (name, worst_relative_error) pairs.
"""

import numpy as np

from . import tensor as T
from .corpus import RubricSpec
from .encoder import EncoderConfig
from .heads import (LossWeights, combined_loss, cross_entropy_batch, mse,
                    nt_xent)
from .model import build_model, forward_heads, forward_reprs


OP_THRESHOLD = 1e-6
MODEL_THRESHOLD = 1e-4


def _leaf(rng, *shape):
    return T.Tensor(rng.standard_normal(shape), requires_grad=True)


def op_suite(seed=0):
    """Per-operation gradient checks on small fixed shapes."""
    rng = np.random.default_rng(seed)
    a = _leaf(rng, 3, 4)
    b = _leaf(rng, 3, 4)
    c = _leaf(rng, 4)
    m = _leaf(rng, 4, 5)
    batched = _leaf(rng, 2, 3, 4)
    pos = T.Tensor(np.abs(rng.standard_normal((3, 4))) + 0.5, requires_grad=True)

    cases = [
        ("add", lambda: T.tsum(T.mul(T.add(a, c), b)), [a, b, c]),
        ("sub", lambda: T.tsum(T.mul(T.sub(a, c), b)), [a, b, c]),
        ("mul", lambda: T.tsum(T.mul(T.mul(a, b), a)), [a, b]),
        ("div", lambda: T.tsum(T.div(a, pos)), [a, pos]),
        ("scale", lambda: T.tsum(T.scale(a, -1.7)), [a]),
        ("log", lambda: T.tsum(T.log(pos)), [pos]),
        ("sqrt", lambda: T.tsum(T.sqrt(pos)), [pos]),
        ("relu", lambda: T.tsum(T.relu(a)), [a]),
        ("gelu", lambda: T.tsum(T.gelu(a)), [a]),
        ("reshape", lambda: T.tsum(T.mul(T.reshape(a, (4, 3)), 2.0)), [a]),
        ("swapaxes", lambda: T.tsum(T.mul(T.swapaxes(batched, 0, 2), 1.5)),
         [batched]),
        ("concat", lambda: T.tsum(T.mul(T.concat([a, b], axis=1),
                                        T.concat([b, a], axis=1))), [a, b]),
        ("stack_rows", lambda: T.tsum(T.mul(T.stack_rows([c, c]), 3.0)), [c]),
        ("matmul", lambda: T.tsum(T.matmul(a, m)), [a, m]),
        ("matmul_vec", lambda: T.tsum(T.matmul(c, m)), [c, m]),
        ("matmul_batched", lambda: T.tsum(T.matmul(batched, m)), [batched, m]),
        ("tsum_axis", lambda: T.tsum(T.mul(T.tsum(a, axis=1), 2.0)), [a]),
        ("mean", lambda: T.mean(T.mul(a, b)), [a, b]),
        ("mean_axis", lambda: T.tsum(T.mean(a, axis=0)), [a]),
        ("softmax", lambda: T.tsum(T.mul(T.softmax(a), b)), [a]),
        ("logsumexp", lambda: T.tsum(T.logsumexp(a)), [a]),
        ("layer_norm", lambda: T.tsum(T.mul(T.layer_norm(a, c, T.Tensor(
            np.zeros(4), requires_grad=True)), b)), [a, c]),
        ("gather_rows", lambda: T.tsum(T.mul(T.gather_rows(a, [0, 2, 1, 0]),
                                             1.3)), [a]),
        ("select_positions", lambda: T.tsum(T.select_positions(a, [1, 3, 0])),
         [a]),
        ("take_axis1", lambda: T.tsum(T.mul(T.take_axis1(batched, 1), 2.0)),
         [batched]),
        ("cosine_similarity", lambda: T.cosine_similarity(c, T.Tensor(
            np.arange(1.0, 5.0))), [c]),
    ]
    results = []
    for name, build, leaves in cases:
        results.append((name, T.grad_check_leaves(build, leaves, step=1e-6)))
    return results


def model_suite(d_model=16, n_essays=4, max_coords=6, seed=0):
    """Gradient check of the combined loss through a working model.

    Uses a 4-essay batch with two shared prompts so the contrastive term
    sees positive pairs; every parameter tensor is sampled at up to
    `max_coords` coordinates.
    """
    rubric = RubricSpec(name="check", dimensions=("quality", "style"),
                        bands=(1.0, 2.0, 3.0))
    texts = [
        "the river bends east past the old mill. it floods in spring.",
        "a short note on the river and its crossings near town.",
        "market days bring carts and noise to the square every week.",
        "the square stays quiet in winter except for the bakery.",
    ]
    prompts = ["describe the river.", "describe the river.",
               "describe the square.", "describe the square."]
    from .corpus import Corpus, EssayRecord, build_vocab

    records = [EssayRecord(id=f"g{i}", full_text=t, prompt=p,
                           prompt_id=f"p{i // 2}",
                           scores={"quality": 1.0 + (i % 3),
                                   "style": 1.0 + ((i + 1) % 3)})
               for i, (t, p) in enumerate(zip(texts, prompts))]
    corpus = Corpus(rubric=rubric, records=records)
    vocab = build_vocab(corpus, max_size=128)
    cfg = EncoderConfig(vocab_size=len(vocab), max_seq_len=24, d_model=d_model,
                        n_layers=2, n_heads=2, d_ff=2 * d_model)
    model = build_model(rubric, vocab, cfg, seed=seed)
    from .model import tokenize_records

    essays, pseqs = tokenize_records(records, vocab, cfg)
    gold_idx = {dim: np.array([rubric.band_index(r.scores[dim]) for r in records])
                for dim in rubric.dimensions}
    gold_val = np.array([[r.scores[dim] for dim in rubric.dimensions]
                         for r in records])
    weights = LossWeights(lambda1=0.7, lambda2=0.3, tau=0.5)
    pairs = ((0, 1), (2, 3))

    def build():
        reprs = forward_reprs(model, essays, pseqs)
        logits, reg = forward_heads(model, reprs)
        ce = cross_entropy_batch(logits, gold_idx)
        ms = mse(reg, gold_val)
        nt = nt_xent(reprs, pairs, tau=weights.tau)
        total = T.add(T.add(ce, T.scale(ms, weights.lambda1)),
                      T.scale(nt, weights.lambda2))
        return total

    names = sorted(model.params)
    results = []
    for name in names:
        leaf = model.params[name]
        err = T.grad_check_leaves(build, [leaf], step=1e-5,
                                  max_coords=max_coords, seed=seed)
        results.append((name, err))
    return results


def run_suites(dims="small"):
    """Both suites at the requested size; returns (ops, model, passed)."""
    if dims == "small":
        ops = op_suite()
        model = model_suite(d_model=16, max_coords=4)
    elif dims == "full":
        ops = op_suite()
        model = model_suite(d_model=32, max_coords=8)
    else:
        raise ValueError(f"unknown gradcheck size {dims!r}")
    ok = (all(e < OP_THRESHOLD for _, e in ops)
          and all(e < MODEL_THRESHOLD for _, e in model))
    return ops, model, ok
