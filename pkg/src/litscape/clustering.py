"""Ward agglomerative clustering of mention embeddings into synonym clusters."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import DataIntegrityError, InvalidArgumentError
from .extraction import Mention
from .model import Category

DEFAULT_THRESHOLD = 0.7


@dataclass(frozen=True)
class MergeStep:
    left: int
    right: int
    merged: int
    height: float
    size: int


@dataclass
class Dendrogram:
    leaf_count: int
    steps: list[MergeStep] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "leaf_count": self.leaf_count,
            "steps": [[s.left, s.right, s.merged, s.height, s.size] for s in self.steps],
        }


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.values if isinstance(v, EmbeddingVector) else np.asarray(v) for v in vectors]
    if not rows:
        raise InvalidArgumentError("ward_cluster needs at least one vector")
    dims = {np.asarray(r).shape for r in rows}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise InvalidArgumentError(f"vectors must share one dimension, got shapes {sorted(dims)}")
    return np.asarray(rows, dtype=np.float64)


def ward_cluster(vectors: Sequence) -> Dendrogram:
    """Agglomerate with Ward linkage via the Lance-Williams update on squared distances.

    Leaves are ids ``0..n-1``; the cluster formed at step ``k`` gets id ``n + k``.
    Merge heights are Ward distances (the Euclidean distance for two singletons).
    Exact ties go to the lexicographically smallest ``(min id, max id)`` pair.
    """
    x = _as_matrix(vectors)
    n = len(x)
    total = 2 * n - 1
    d2 = np.full((total, total), np.inf)
    diff = x[:, None, :] - x[None, :, :]
    d2[:n, :n] = np.einsum("ijk,ijk->ij", diff, diff)
    sizes = np.zeros(total, dtype=np.int64)
    sizes[:n] = 1
    active = list(range(n))
    steps: list[MergeStep] = []
    prev_height = 0.0
    for k in range(n - 1):
        idx = np.asarray(active)
        sub = d2[np.ix_(idx, idx)]
        sub = np.where(np.triu(np.ones_like(sub, dtype=bool), 1), sub, np.inf)
        best = sub.min()
        # argwhere is row-major and ``active`` is ascending, so the first hit is the smallest pair
        r, c = np.argwhere(sub == best)[0]
        i, j = int(idx[r]), int(idx[c])
        new = n + k
        ni, nj = sizes[i], sizes[j]
        others = idx[(idx != i) & (idx != j)]
        if others.size:
            no = sizes[others]
            upd = ((ni + no) * d2[i, others] + (nj + no) * d2[j, others] - no * d2[i, j]) / (ni + nj + no)
            upd = np.maximum(upd, 0.0)
            d2[new, others] = upd
            d2[others, new] = upd
        sizes[new] = ni + nj
        # Ward is monotone; the max() only absorbs last-bit rounding
        height = max(float(np.sqrt(max(best, 0.0))), prev_height)
        prev_height = height
        steps.append(MergeStep(i, j, new, height, int(ni + nj)))
        active = [a for a in active if a not in (i, j)] + [new]
    return Dendrogram(n, steps)


def cut_dendrogram(d: Dendrogram, threshold: float) -> list[list[int]]:
    """Apply every merge strictly below ``threshold``; return sorted leaf groups."""
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be positive")
    n = d.leaf_count
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for s in d.steps:
        if s.height < threshold:
            members[s.merged] = members.pop(s.left) + members.pop(s.right)
    return sorted((sorted(m) for m in members.values()), key=lambda g: g[0])


@dataclass
class SynonymCluster:
    id: str
    category: Category
    members: list[str]
    label: str
    paper_freq: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "label": self.label,
            "members": list(self.members),
            "paper_freq": self.paper_freq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynonymCluster":
        return cls(d["id"], Category.parse(d["category"]), list(d["members"]), d["label"], int(d["paper_freq"]))


def _pick_label(surface_counts: Counter) -> str:
    return min(surface_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def make_clusters(
    mentions: Sequence[Mention],
    vectors: Mapping[str, EmbeddingVector],
    threshold: float = DEFAULT_THRESHOLD,
    dendrograms: dict | None = None,
) -> list[SynonymCluster]:
    """Cluster distinct normalized surfaces per category.

    ``vectors`` maps a normalized surface to its embedding. Pass a dict as
    ``dendrograms`` to receive each category's leaf list and merge tree.
    """
    by_cat: dict[Category, list[Mention]] = defaultdict(list)
    for m in mentions:
        by_cat[m.category].append(m)
    clusters: list[SynonymCluster] = []
    for cat in sorted(by_cat, key=lambda c: c.order):
        ms = by_cat[cat]
        leaves = sorted({m.normalized for m in ms})
        missing = [s for s in leaves if s not in vectors]
        if missing:
            raise DataIntegrityError(f"no embedding for {cat.value} surfaces: {missing[:5]}")
        dend = ward_cluster([vectors[s] for s in leaves])
        if dendrograms is not None:
            dendrograms[cat.value] = {"leaves": leaves, **dend.to_dict()}
        surfaces: dict[str, Counter] = defaultdict(Counter)
        papers: dict[str, set] = defaultdict(set)
        for m in ms:
            surfaces[m.normalized][m.surface] += 1
            papers[m.normalized].add(m.paper_id)
        built = []
        for group in cut_dendrogram(dend, threshold):
            members = [leaves[i] for i in group]
            counts: Counter = Counter()
            pids: set = set()
            for s in members:
                counts.update(surfaces[s])
                pids |= papers[s]
            built.append((_pick_label(counts), members, len(pids)))
        built.sort(key=lambda t: (t[0], t[1]))
        prefix = cat.value[0]
        for i, (label, members, freq) in enumerate(built):
            clusters.append(SynonymCluster(f"{prefix}{i:03d}", cat, members, label, freq))
    return clusters


def cluster_index(clusters: Sequence[SynonymCluster]) -> dict[tuple[Category, str], str]:
    """(category, normalized surface) -> cluster id."""
    index = {}
    for c in clusters:
        for s in c.members:
            index[(c.category, s)] = c.id
    return index


def dumps_clusters(clusters: Sequence[SynonymCluster]) -> str:
    return "".join(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for c in clusters)
