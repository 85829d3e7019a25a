import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from litscape.errors import DataIntegrityError
from litscape.evaluation import (
    GoldAnnotation,
    MatchPolicy,
    evaluate,
    f1_scores,
    format_report,
    load_gold,
    match_mentions,
    parse_gold,
)
from litscape.extraction import Mention, normalize
from litscape.model import Category, SectionKind

M, D = Category.METHOD, Category.DATASET


def _m(pid, cat, surface):
    return Mention(pid, cat, surface, SectionKind.OTHER, normalize(surface))


def test_counts_to_scores():
    s = f1_scores(3, 1, 2)
    assert s["precision"] == 0.75
    assert s["recall"] == 0.6
    assert abs(s["f1"] - 2 / 3) <= 1e-9


def test_all_zero():
    assert f1_scores(0, 0, 0) == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_perfect():
    assert f1_scores(5, 0, 0) == {"precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        f1_scores(-1, 0, 0)


def test_policy_divergence():
    pred = [_m("p1", M, "SVM")]
    gold = [GoldAnnotation("p1", M, ["Support Vector Machine"])]
    exact = match_mentions(pred, gold, MatchPolicy.NORMALIZED_EXACT)[M]
    assert (exact.tp, exact.fp, exact.fn) == (0, 1, 1)
    index = {(M, "svm"): "M000", (M, "support vector machine"): "M000"}
    aware = match_mentions(pred, gold, MatchPolicy.CLUSTER_AWARE, index)[M]
    assert (aware.tp, aware.fp, aware.fn) == (1, 0, 0)


def test_cluster_aware_needs_index():
    with pytest.raises(ValueError):
        match_mentions([], [], MatchPolicy.CLUSTER_AWARE)


def test_no_predictions():
    c = match_mentions([], [GoldAnnotation("p1", D, ["SP500", "Yahoo Finance"])])[D]
    assert (c.tp, c.fp, c.fn) == (0, 0, 2)


def test_normalization_applies_to_both_sides():
    c = match_mentions([_m("p1", D, "S&P 500 (index)")], [GoldAnnotation("p1", D, ["s&p  500"])])[D]
    assert (c.tp, c.fp, c.fn) == (1, 0, 0)


def test_other_papers_not_scored():
    c = match_mentions([_m("p9", D, "SP500")], [GoldAnnotation("p1", D, ["SP500"])])[D]
    assert (c.tp, c.fp, c.fn) == (0, 0, 1)


def test_gold_items_deduplicated():
    assert GoldAnnotation("p", D, ["SP500", "sp500", "Yahoo"]).items == ["SP500", "Yahoo"]


def test_micro_pools_counts():
    pred = [_m("p1", M, "SVM"), _m("p1", M, "LSTM"), _m("p1", D, "SP500"), _m("p2", D, "X")]
    gold = [GoldAnnotation("p1", M, ["SVM"]), GoldAnnotation("p1", D, ["SP500", "Yahoo"]),
            GoldAnnotation("p2", D, ["Y"])]
    rep = evaluate(pred, gold)
    per = rep["per_category"]
    assert (per["Method"]["tp"], per["Method"]["fp"], per["Method"]["fn"]) == (1, 1, 0)
    assert (per["Dataset"]["tp"], per["Dataset"]["fp"], per["Dataset"]["fn"]) == (1, 1, 2)
    micro = rep["micro"]
    for k in ("tp", "fp", "fn"):
        assert micro[k] == sum(v[k] for v in per.values())
    assert "micro" in format_report(rep)


_counts = st.integers(0, 1000)


@given(_counts, _counts, _counts)
def test_f1_between_min_and_max(tp, fp, fn):
    s = f1_scores(tp, fp, fn)
    assert 0.0 <= s["f1"] <= 1.0
    if s["precision"] > 0 and s["recall"] > 0:
        lo, hi = sorted((s["precision"], s["recall"]))
        assert lo - 1e-12 <= s["f1"] <= hi + 1e-12


@given(st.permutations(["SVM", "LSTM", "BERT", "SVM", "XGBoost", "Random Forest"]))
def test_prediction_order_irrelevant(order):
    gold = [GoldAnnotation("p1", M, ["SVM", "BERT", "GRU"])]
    base = evaluate([_m("p1", M, s) for s in sorted(order)], gold)
    assert evaluate([_m("p1", M, s) for s in order], gold) == base


@pytest.mark.parametrize("record", [
    {"paper_id": "p", "category": "Dataset"},
    {"paper_id": "p", "category": "Nope", "items": []},
    {"paper_id": "p", "category": "Dataset", "items": "SP500"},
    {"category": "Dataset", "items": []},
])
def test_malformed_gold(record):
    with pytest.raises(DataIntegrityError):
        parse_gold([record])


def test_load_gold_bad_json(tmp_path):
    path = tmp_path / "gold.jsonl"
    path.write_text(json.dumps({"paper_id": "p", "category": "Method", "items": ["a"]}) + "\n{oops\n")
    with pytest.raises(DataIntegrityError, match="line 2"):
        load_gold(path)
