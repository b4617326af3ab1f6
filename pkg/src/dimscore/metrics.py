"""Per-dimension agreement metrics and report rendering.

Predicted and gold bands are compared as ordinal class indices through a
confusion matrix. Quadratic Weighted Kappa uses the standard quadratic
disagreement weights against an expected matrix from the marginal outer
product. Precision and F1 are macro-averaged: precision over classes
that received predictions, F1 over classes present in the gold labels;
classes with an empty denominator contribute zero.
"""

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .heads import DimensionScores


def confusion(gold_bands, pred_bands, n_classes):
    """Count matrix with gold on rows, predictions on columns."""
    gold = np.asarray(gold_bands, dtype=np.int64)
    pred = np.asarray(pred_bands, dtype=np.int64)
    if gold.shape != pred.shape or gold.ndim != 1:
        raise DataError(f"confusion: mismatched lengths {gold.shape} vs {pred.shape}")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    for g, p in zip(gold, pred):
        if not (0 <= g < n_classes and 0 <= p < n_classes):
            raise DataError(f"confusion: band index ({g}, {p}) outside 0..{n_classes - 1}")
        m[g, p] += 1
    return m


def _checked(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise UsageError(f"expected a square matrix with K >= 2, got {m.shape}")
    if m.sum() == 0:
        raise UsageError("empty confusion matrix")
    return m


def qwk(m):
    """Quadratic weighted kappa: 1 - sum(w*O) / sum(w*E).

    O is the observed proportion matrix, E the outer product of its
    marginals, and w_ij = (i-j)^2 / (K-1)^2. When both raters are
    constant on the same band the ratio is 0/0; that degenerate case
    returns 1.0 with a warning.
    """
    m = _checked(m)
    k = m.shape[0]
    observed = m / m.sum()
    rows = observed.sum(axis=1)
    cols = observed.sum(axis=0)
    expected = np.outer(rows, cols)
    idx = np.arange(k, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    denom = float((weights * expected).sum())
    if denom == 0.0:
        warnings.warn("qwk: both raters constant on one band; "
                      "agreement is degenerate, returning 1.0", RuntimeWarning)
        return 1.0
    return 1.0 - float((weights * observed).sum()) / denom


def precision_macro(m):
    """Mean per-class precision over classes that received predictions."""
    m = _checked(m)
    diag = np.diag(m)
    cols = m.sum(axis=0)
    mask = cols > 0
    return float(np.mean(diag[mask] / cols[mask]))


def f1_macro(m):
    """Mean per-class F1 over classes present in the gold labels.

    Per class, precision defaults to 0 when the class was never
    predicted; F1 is 0 when precision + recall is 0.
    """
    m = _checked(m)
    diag = np.diag(m)
    cols = m.sum(axis=0)
    rows = m.sum(axis=1)
    scores = []
    for c in np.nonzero(rows > 0)[0]:
        p = diag[c] / cols[c] if cols[c] > 0 else 0.0
        r = diag[c] / rows[c]
        scores.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class DimensionMetrics:
    dimension: str
    precision: float
    f1: float
    qwk: float


@dataclass
class MetricsReport:
    corpus_id: str
    model_id: str
    n_essays: int
    rows: list

    def by_dimension(self):
        return {r.dimension: r for r in self.rows}


def evaluate_corpus(predictions, gold, rubric=None, corpus_id="corpus", model_id="model"):
    """Per-dimension metrics of predicted bands against a gold corpus.

    predictions maps essay id to either a DimensionScores or a plain
    dimension-to-band dict; the id set must match the corpus exactly.
    """
    rubric = rubric or gold.rubric
    pred_ids = set(predictions)
    gold_ids = set(gold.ids())
    missing = sorted(gold_ids - pred_ids)
    extra = sorted(pred_ids - gold_ids)
    if missing or extra:
        raise DataError(f"prediction ids disagree with corpus: missing {missing[:5]}"
                        f"{'...' if len(missing) > 5 else ''}, extra {extra[:5]}"
                        f"{'...' if len(extra) > 5 else ''}")
    k = rubric.n_bands
    rows = []
    for dim in rubric.dimensions:
        gold_idx, pred_idx = [], []
        for rec in gold.records:
            p = predictions[rec.id]
            band = p.bands[dim] if isinstance(p, DimensionScores) else p[dim]
            gold_idx.append(rubric.band_index(rec.scores[dim]))
            pred_idx.append(rubric.band_index(band))
        m = confusion(gold_idx, pred_idx, k)
        rows.append(DimensionMetrics(dimension=dim, precision=precision_macro(m),
                                     f1=f1_macro(m), qwk=qwk(m)))
    return MetricsReport(corpus_id=corpus_id, model_id=model_id,
                         n_essays=len(gold), rows=rows)


REPORT_CSV_HEADER = "dimension,precision,f1,qwk"


def render_report(report, fmt="text"):
    """Report as an aligned text table (2 decimals) or full-precision CSV."""
    if fmt == "csv":
        out = io.StringIO()
        out.write(REPORT_CSV_HEADER + "\n")
        for r in report.rows:
            out.write(f"{r.dimension},{r.precision!r},{r.f1!r},{r.qwk!r}\n")
        return out.getvalue()
    if fmt != "text":
        raise UsageError(f"unknown report format {fmt!r}")
    name_w = max(len("dimension"), max(len(r.dimension) for r in report.rows))
    lines = [f"corpus: {report.corpus_id}  model: {report.model_id}  "
             f"essays: {report.n_essays}  averaging: macro",
             f"{'dimension':<{name_w}}  precision  f1     qwk"]
    for r in report.rows:
        lines.append(f"{r.dimension:<{name_w}}  {r.precision:<9.2f}  "
                     f"{r.f1:<5.2f}  {r.qwk:.2f}")
    return "\n".join(lines) + "\n"


def parse_report_csv(doc):
    """Inverse of render_report(fmt='csv'): dimension -> DimensionMetrics."""
    lines = [ln for ln in doc.strip().split("\n") if ln]
    if not lines or lines[0] != REPORT_CSV_HEADER:
        raise DataError(f"report csv must start with {REPORT_CSV_HEADER!r}")
    out = {}
    for ln in lines[1:]:
        dim, p, f1, q = ln.split(",")
        out[dim] = DimensionMetrics(dimension=dim, precision=float(p),
                                    f1=float(f1), qwk=float(q))
    return out
