"""Agreement metrics against an independent brute-force implementation."""

import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimscore.corpus import Corpus, EssayRecord, RubricSpec
from dimscore.errors import DataError, UsageError
from dimscore.metrics import (DimensionMetrics, MetricsReport, confusion,
                              evaluate_corpus, f1_macro, parse_report_csv,
                              precision_macro, qwk, render_report)


def qwk_brute_force(m):
    """Straight transcription of the weighted-kappa formula, no vectorization."""
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    total = m.sum()
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    num = 0.0
    den = 0.0
    for i in range(k):
        for j in range(k):
            w = (i - j) ** 2 / (k - 1) ** 2
            expected = row[i] * col[j] / total
            num += w * m[i, j]
            den += w * expected
    return 1.0 - num / den


def random_confusion(rng):
    k = rng.integers(2, 11)
    m = rng.integers(0, 30, size=(k, k))
    # ensure the brute-force denominator is nonzero
    m[0, -1] += 1
    m[-1, 0] += 1
    return m


def test_qwk_matches_brute_force_on_1000_matrices():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(1000):
        m = random_confusion(rng)
        worst = max(worst, abs(qwk(m) - qwk_brute_force(m)))
    assert worst < 1e-12


def test_qwk_identical_ratings_is_exactly_one():
    m = np.diag([7, 3, 5, 2])
    assert qwk(m) == 1.0


def test_qwk_degenerate_single_band_warns_and_returns_one():
    m = np.zeros((3, 3), dtype=int)
    m[1, 1] = 9
    with pytest.warns(RuntimeWarning):
        assert qwk(m) == 1.0


def test_qwk_transpose_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m = random_confusion(rng)
        assert abs(qwk(m) - qwk(m.T)) < 1e-12


def test_confusion_validates_inputs():
    with pytest.raises(DataError):
        confusion([0, 1], [0], 3)
    with pytest.raises(DataError):
        confusion([0, 3], [0, 1], 3)
    m = confusion([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert m.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert m.dtype == np.int64


def test_macro_metrics_column_vs_row_support():
    # gold uniform over three classes, every prediction lands on class 0:
    # only class 0 has prediction support, so macro precision is its
    # precision alone (1/3); macro F1 averages F1 over the three gold
    # classes, 2*(1/3)*1/(1/3+1)/3 = 1/6
    m = confusion([0, 1, 2], [0, 0, 0], 3)
    assert precision_macro(m) == pytest.approx(1 / 3, abs=1e-15)
    assert f1_macro(m) == pytest.approx(1 / 6, abs=1e-15)


def test_macro_metrics_perfect_prediction():
    m = np.diag([4, 4, 4])
    assert precision_macro(m) == 1.0
    assert f1_macro(m) == 1.0


def test_qwk_usage_errors():
    with pytest.raises(UsageError):
        qwk(np.zeros((2, 3)))
    with pytest.raises(UsageError):
        qwk(np.zeros((1, 1)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_qwk_brute_force_property(seed):
    m = random_confusion(np.random.default_rng(seed))
    assert abs(qwk(m) - qwk_brute_force(m)) < 1e-12
    assert qwk(m) <= 1.0 + 1e-12


def _tiny_gold():
    rubric = RubricSpec(name="r", dimensions=("q",), bands=(1.0, 2.0, 3.0))
    records = [EssayRecord(id=f"e{i}", full_text="x", scores={"q": b})
               for i, b in enumerate([1.0, 2.0, 3.0, 2.0])]
    return Corpus(rubric=rubric, records=records)


def test_evaluate_corpus_and_id_mismatch():
    gold = _tiny_gold()
    preds = {r.id: {"q": r.scores["q"]} for r in gold.records}
    report = evaluate_corpus(preds, gold)
    assert report.n_essays == 4
    assert report.rows[0].qwk == 1.0
    assert report.rows[0].f1 == 1.0
    del preds["e0"]
    preds["zz"] = {"q": 1.0}
    with pytest.raises(DataError, match="missing.*e0"):
        evaluate_corpus(preds, gold)


def test_render_report_text_and_csv_round_trip():
    rows = [DimensionMetrics("cohesion", 0.8123456789, 0.75, 0.9012345678901234),
            DimensionMetrics("syntax", 1 / 3, 1 / 6, -0.25)]
    report = MetricsReport(corpus_id="c", model_id="m", n_essays=10, rows=rows)
    text = render_report(report, fmt="text")
    assert "averaging: macro" in text.splitlines()[0]
    assert "0.81" in text and "-0.25" in text
    csv_doc = render_report(report, fmt="csv")
    parsed = parse_report_csv(csv_doc)
    for r in rows:
        assert parsed[r.dimension].precision == r.precision
        assert parsed[r.dimension].f1 == r.f1
        assert parsed[r.dimension].qwk == r.qwk
    with pytest.raises(UsageError):
        render_report(report, fmt="json")
    with pytest.raises(DataError):
        parse_report_csv("wrong,header\n")
