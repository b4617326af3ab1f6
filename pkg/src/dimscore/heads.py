"""Scoring heads and training objectives.

Each rubric dimension gets its own K-way classification head over the
combined representation, alongside one multi-output regression head
producing a continuous score per dimension. The objective is
cross-entropy plus lambda1 * MSE plus lambda2 * NT-Xent contrastive
loss over same-prompt pairs. predict_scores fuses the two heads at
inference: the regression output is clamped to the band range and
snapped to the nearest legal band (ties snap downward), with the
classification argmax reported alongside.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, DomainError, ShapeError, UsageError
from .tensor import Tensor

NEG_INF = -1e30


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.1
    tau: float = 0.5

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if not math.isfinite(self.tau) or self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    mse: float
    contrastive: float
    total: float


@dataclass
class DimensionScores:
    """Final per-dimension output: snapped band, classifier argmax band,
    and the raw regression value."""

    bands: dict
    argmax_bands: dict
    raw: dict


def init_head_params(rubric, repr_width, seed):
    """Seeded head parameters keyed by canonical names."""
    rng = np.random.default_rng(seed)
    k = rubric.n_bands
    d = len(rubric.dimensions)
    params = {}
    for dim in rubric.dimensions:
        std = np.sqrt(2.0 / (k + repr_width))
        params[f"head.cls.{dim}.w"] = Tensor(
            rng.normal(0.0, std, size=(k, repr_width)), requires_grad=True)
        params[f"head.cls.{dim}.b"] = Tensor(np.zeros(k), requires_grad=True)
    std = np.sqrt(2.0 / (d + repr_width))
    params["head.reg.w"] = Tensor(
        rng.normal(0.0, std, size=(d, repr_width)), requires_grad=True)
    params["head.reg.b"] = Tensor(np.zeros(d), requires_grad=True)
    return params


def _head_pair(params, dim):
    try:
        return params[f"head.cls.{dim}.w"], params[f"head.cls.{dim}.b"]
    except KeyError:
        raise ConfigError(f"no classification head for dimension {dim!r}") from None


def classify(cls, params, rubric):
    """Per-dimension logits W_d @ cls + b_d for a single representation."""
    out = {}
    for dim in rubric.dimensions:
        w, b = _head_pair(params, dim)
        if w.shape[1] != cls.shape[-1]:
            raise ShapeError(f"head width {w.shape[1]} vs repr width {cls.shape[-1]}")
        out[dim] = T.add(T.matmul(w, cls), b)
    return out


def classify_batch(reprs, params, rubric):
    """Logits for a [n, width] batch: dict dim -> Tensor[n, K]."""
    out = {}
    for dim in rubric.dimensions:
        w, b = _head_pair(params, dim)
        out[dim] = T.add(T.matmul(reprs, T.swapaxes(w, 0, 1)), b)
    return out


def class_probs(logits):
    """Softmax over logits; delegates to the core softmax."""
    return T.softmax(logits)


def regress(cls, params, rubric):
    """Continuous score per dimension: beta @ cls + gamma, unclamped."""
    w, b = params["head.reg.w"], params["head.reg.b"]
    if w.shape[1] != cls.shape[-1]:
        raise ShapeError(f"regression width {w.shape[1]} vs repr width {cls.shape[-1]}")
    if w.shape[0] != len(rubric.dimensions):
        raise ConfigError(f"regression head covers {w.shape[0]} dimensions, "
                          f"rubric has {len(rubric.dimensions)}")
    return T.add(T.matmul(w, cls), b)


def regress_batch(reprs, params, rubric):
    w, b = params["head.reg.w"], params["head.reg.b"]
    if w.shape[0] != len(rubric.dimensions):
        raise ConfigError(f"regression head covers {w.shape[0]} dimensions, "
                          f"rubric has {len(rubric.dimensions)}")
    return T.add(T.matmul(reprs, T.swapaxes(w, 0, 1)), b)


def cross_entropy(probs, gold_band):
    """-log(probs[gold_band]) for one probability vector."""
    k = probs.shape[-1]
    if not 0 <= gold_band < k:
        raise DataError(f"gold band {gold_band} outside 0..{k - 1}")
    picked = T.select_positions(T.reshape(probs, (1, k)), [gold_band])
    return T.reshape(T.scale(T.log(picked), -1.0), ())


def cross_entropy_batch(logits_by_dim, gold_idx_by_dim):
    """Mean negative log-likelihood over essays and dimensions.

    Computed from logits via logsumexp for stability; equals the mean of
    -log(softmax(logits)[gold]).
    """
    dims = list(logits_by_dim)
    n = logits_by_dim[dims[0]].shape[0]
    acc = None
    for dim in dims:
        logits = logits_by_dim[dim]
        gold = np.asarray(gold_idx_by_dim[dim], dtype=np.int64)
        term = T.tsum(T.sub(T.logsumexp(logits), T.select_positions(logits, gold)))
        acc = term if acc is None else T.add(acc, term)
    return T.scale(acc, 1.0 / (n * len(dims)))


def mse(pred, gold):
    """Mean squared error over all entries."""
    gold = gold if isinstance(gold, Tensor) else Tensor(np.asarray(gold, dtype=np.float64))
    if pred.shape != gold.shape:
        raise ShapeError(f"mse: shapes {pred.shape} vs {gold.shape}")
    diff = T.sub(pred, gold)
    return T.mean(T.mul(diff, diff))


def _check_pairs(n, positive_pairs):
    seen = set()
    for i, j in positive_pairs:
        for x in (i, j):
            if not 0 <= x < n:
                raise UsageError(f"pair index {x} out of range for {n} representations")
            if x in seen:
                raise UsageError(f"index {x} appears in more than one pair")
            seen.add(x)
    if len(seen) != n:
        raise UsageError(f"pairs cover {len(seen)} of {n} representations")


def nt_xent(reprs, positive_pairs, tau):
    """Normalized temperature-scaled contrastive loss.

    reprs is a [2N, width] tensor (or list of 1-D tensors) where each
    index belongs to exactly one positive pair. Every index serves as an
    anchor: its loss is -log softmax over similarities to all other
    indices, with the positive partner as the target. Returns the scalar
    mean over the 2N anchors as a graph tensor.
    """
    if not isinstance(reprs, Tensor):
        reprs = T.stack_rows(list(reprs))
    if reprs.ndim != 2:
        raise ShapeError(f"nt_xent: expected [2N, width], got {reprs.shape}")
    n = reprs.shape[0]
    if n < 2 or n % 2 != 0:
        raise UsageError(f"nt_xent needs an even number >= 2 of representations, got {n}")
    if tau <= 0:
        raise UsageError(f"tau must be positive, got {tau}")
    _check_pairs(n, positive_pairs)
    norms_sq = np.sum(reprs.data * reprs.data, axis=1)
    if np.any(norms_sq == 0.0):
        raise DomainError(f"zero-norm representation at index {int(np.argmin(norms_sq))}")

    partner = np.empty(n, dtype=np.int64)
    for i, j in positive_pairs:
        partner[i], partner[j] = j, i
    inv_norm = T.div(Tensor(1.0), T.sqrt(T.tsum(T.mul(reprs, reprs), axis=1, keepdims=True)))
    unit = T.mul(reprs, inv_norm)
    sim = T.scale(T.matmul(unit, T.swapaxes(unit, 0, 1)), 1.0 / tau)
    sim = T.add(sim, Tensor(np.diag(np.full(n, NEG_INF))))
    return T.mean(T.sub(T.logsumexp(sim), T.select_positions(sim, partner)))


def nt_xent_from_sim(sim, positive_pairs, tau):
    """Reference evaluation from a precomputed similarity matrix (no graph)."""
    sim = np.asarray(sim, dtype=np.float64) / tau
    n = sim.shape[0]
    _check_pairs(n, positive_pairs)
    total = 0.0
    for i, j in positive_pairs:
        for a, b in ((i, j), (j, i)):
            others = [sim[a, k] for k in range(n) if k != a]
            m = max(others)
            lse = m + math.log(sum(math.exp(v - m) for v in others))
            total += lse - sim[a, b]
    return total / n


def combined_loss(ce, mse_value, contrastive, weights):
    """Weighted three-term objective as a LossBreakdown."""
    parts = {"ce": ce, "mse": mse_value, "contrastive": contrastive}
    for name, v in parts.items():
        if not math.isfinite(v) or v < 0:
            raise UsageError(f"loss component {name} must be finite and >= 0, got {v}")
    total = ce + weights.lambda1 * mse_value + weights.lambda2 * contrastive
    return LossBreakdown(ce=ce, mse=mse_value, contrastive=contrastive, total=total)


def snap_to_band(value, rubric):
    """Clamp into the band range, then pick the nearest band, ties down."""
    bands = rubric.bands
    x = min(max(value, bands[0]), bands[-1])
    diffs = [abs(x - b) for b in bands]
    return bands[diffs.index(min(diffs))]


def predict_scores(logits_by_dim, regression, rubric):
    """Fuse head outputs into final per-dimension bands for one essay."""
    reg = regression.data if isinstance(regression, Tensor) else np.asarray(regression)
    bands, argmax_bands, raw = {}, {}, {}
    for d, dim in enumerate(rubric.dimensions):
        logits = logits_by_dim[dim]
        z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
        raw[dim] = float(reg[d])
        bands[dim] = snap_to_band(raw[dim], rubric)
        argmax_bands[dim] = rubric.bands[int(np.argmax(z))]
    return DimensionScores(bands=bands, argmax_bands=argmax_bands, raw=raw)


def predict_scores_batch(logits_by_dim, regression, rubric):
    """Vector form of predict_scores for [n, K] logits and [n, D] regression."""
    reg = regression.data if isinstance(regression, Tensor) else np.asarray(regression)
    mats = {dim: (v.data if isinstance(v, Tensor) else np.asarray(v))
            for dim, v in logits_by_dim.items()}
    out = []
    for i in range(reg.shape[0]):
        row_logits = {dim: mats[dim][i] for dim in rubric.dimensions}
        out.append(predict_scores(row_logits, reg[i], rubric))
    return out
