"""Precision / recall / F1 of extracted mentions against gold annotations."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .errors import DataIntegrityError
from .extraction import Mention, normalize
from .model import Category


class MatchPolicy(str, Enum):
    NORMALIZED_EXACT = "NormalizedExact"
    CLUSTER_AWARE = "ClusterAware"


@dataclass
class GoldAnnotation:
    paper_id: str
    category: Category
    items: list[str]

    def __post_init__(self):
        seen, items = set(), []
        for it in self.items:
            key = normalize(it)
            if key and key not in seen:
                seen.add(key)
                items.append(it)
        self.items = items


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "Counts"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


def f1_scores(tp: int, fp: int, fn: int) -> dict[str, float]:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be nonnegative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def parse_gold(records: Iterable[dict]) -> list[GoldAnnotation]:
    out = []
    for i, r in enumerate(records):
        try:
            items = r["items"]
            if isinstance(items, str) or not all(isinstance(x, str) for x in items):
                raise TypeError("items must be a list of strings")
            out.append(GoldAnnotation(str(r["paper_id"]), Category.parse(r["category"]), list(items)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataIntegrityError(f"malformed gold record {i}: {exc}") from exc
    return out


def load_gold(path) -> list[GoldAnnotation]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataIntegrityError(f"gold line {n + 1} is not JSON: {exc}") from exc
    return parse_gold(records)


def match_mentions(
    predicted: Sequence[Mention],
    gold: Sequence[GoldAnnotation],
    policy: MatchPolicy | str = MatchPolicy.NORMALIZED_EXACT,
    clusters: Optional[Mapping[tuple[Category, str], str]] = None,
) -> dict[Category, Counts]:
    """Count one-to-one matches per (paper, category) and pool them per category.

    Only papers named in ``gold`` are scored; predictions for other papers are ignored.

    ``clusters`` maps (category, normalized surface) to a cluster id and is
    required for the ClusterAware policy; surfaces outside every cluster match
    only themselves.
    """
    policy = MatchPolicy(policy)
    if policy is MatchPolicy.CLUSTER_AWARE and clusters is None:
        raise ValueError("ClusterAware matching needs a cluster index")

    def key(cat: Category, surface_norm: str) -> str:
        if policy is MatchPolicy.CLUSTER_AWARE:
            return clusters.get((cat, surface_norm), "=" + surface_norm)
        return surface_norm

    scored = {g.paper_id for g in gold}
    pred: dict[tuple[str, Category], Counter] = defaultdict(Counter)
    for m in predicted:
        if m.paper_id not in scored:
            continue
        pred[(m.paper_id, m.category)][key(m.category, m.normalized)] += 1
    ref: dict[tuple[str, Category], Counter] = defaultdict(Counter)
    for g in gold:
        for it in g.items:
            ref[(g.paper_id, g.category)][key(g.category, normalize(it))] += 1

    result = {c: Counts() for c in Category}
    for pc in set(pred) | set(ref):
        p, r = pred.get(pc, Counter()), ref.get(pc, Counter())
        tp = sum((p & r).values())
        result[pc[1]] += Counts(tp, sum(p.values()) - tp, sum(r.values()) - tp)
    return result


def evaluate(predicted, gold, policy=MatchPolicy.NORMALIZED_EXACT, clusters=None) -> dict:
    """EvalReport as a plain dict: per-category and micro-pooled counts and scores."""
    per = match_mentions(predicted, gold, policy, clusters)
    micro = Counts()
    report = {"policy": MatchPolicy(policy).value, "per_category": {}}
    for cat in Category:
        c = per[cat]
        micro += c
        report["per_category"][cat.value] = {"tp": c.tp, "fp": c.fp, "fn": c.fn, **f1_scores(c.tp, c.fp, c.fn)}
    report["micro"] = {"tp": micro.tp, "fp": micro.fp, "fn": micro.fn, **f1_scores(micro.tp, micro.fp, micro.fn)}
    return report


def format_report(report: dict) -> str:
    header = f"{'category':<10} {'tp':>4} {'fp':>4} {'fn':>4} {'P':>6} {'R':>6} {'F1':>6}"
    rows = [header, "-" * len(header)]
    entries = list(report["per_category"].items()) + [("micro", report["micro"])]
    for name, r in entries:
        rows.append(f"{name:<10} {r['tp']:>4} {r['fp']:>4} {r['fn']:>4} "
                    f"{r['precision']:>6.3f} {r['recall']:>6.3f} {r['f1']:>6.3f}")
    return "\n".join(rows) + "\n"
