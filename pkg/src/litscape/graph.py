"""Paper-level co-occurrence graphs over synonym clusters, frequency tables, and export."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .clustering import SynonymCluster, cluster_index
from .errors import DataIntegrityError
from .extraction import Mention
from .model import Category


class View(str, Enum):
    THREE_ELEMENT = "ThreeElement"
    OBJECTIVE_DATASET = "ObjectiveDataset"

    @classmethod
    def parse(cls, value) -> "View":
        if isinstance(value, cls):
            return value
        for v in cls:
            if v.value.lower() == str(value).replace("-", "").replace("_", "").lower():
                return v
        raise ValueError(f"unknown graph view: {value!r}")


_VIEW_CATEGORIES = {
    View.THREE_ELEMENT: set(Category),
    View.OBJECTIVE_DATASET: {Category.OBJECTIVE, Category.DATASET},
}


@dataclass(frozen=True)
class GraphNode:
    cluster_id: str
    category: Category
    label: str
    paper_freq: int

    def sort_key(self):
        return (self.category.order, self.label, self.cluster_id)


@dataclass(frozen=True)
class GraphEdge:
    a: str
    b: str
    weight: int


@dataclass
class CooccurrenceGraph:
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)
    view: View = View.THREE_ELEMENT

    def node_map(self) -> dict[str, GraphNode]:
        return {n.cluster_id: n for n in self.nodes}

    def adjacency(self) -> dict[str, dict[str, int]]:
        adj: dict[str, dict[str, int]] = {n.cluster_id: {} for n in self.nodes}
        for e in self.edges:
            adj[e.a][e.b] = e.weight
            adj[e.b][e.a] = e.weight
        return adj

    def restrict(self, categories: set[Category], view: View) -> "CooccurrenceGraph":
        keep = {n.cluster_id for n in self.nodes if n.category in categories}
        return CooccurrenceGraph(
            [n for n in self.nodes if n.cluster_id in keep],
            [e for e in self.edges if e.a in keep and e.b in keep],
            view,
        )

    def to_dict(self) -> dict:
        return {
            "view": self.view.value,
            "nodes": [
                {"id": n.cluster_id, "category": n.category.value, "label": n.label, "paper_freq": n.paper_freq}
                for n in self.nodes
            ],
            "edges": [{"a": e.a, "b": e.b, "weight": e.weight} for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CooccurrenceGraph":
        return cls(
            [GraphNode(n["id"], Category.parse(n["category"]), n["label"], int(n["paper_freq"])) for n in d["nodes"]],
            [GraphEdge(e["a"], e["b"], int(e["weight"])) for e in d["edges"]],
            View.parse(d.get("view", View.THREE_ELEMENT.value)),
        )

    def __eq__(self, other):
        if not isinstance(other, CooccurrenceGraph):
            return NotImplemented
        norm = lambda g: (g.view, sorted(g.nodes, key=GraphNode.sort_key),
                          sorted((min(e.a, e.b), max(e.a, e.b), e.weight) for e in g.edges))
        return norm(self) == norm(other)


def _canonical(nodes: Iterable[GraphNode], weights: dict[tuple[str, str], int], view: View) -> CooccurrenceGraph:
    nodes = sorted(nodes, key=GraphNode.sort_key)
    rank = {n.cluster_id: i for i, n in enumerate(nodes)}
    edges = []
    for (a, b), w in weights.items():
        if rank[a] > rank[b]:
            a, b = b, a
        edges.append(GraphEdge(a, b, w))
    edges.sort(key=lambda e: (rank[e.a], rank[e.b]))
    return CooccurrenceGraph(nodes, edges, view)


def build_cooccurrence(
    clusters: Sequence[SynonymCluster],
    mentions: Sequence[Mention],
    view: View | str = View.THREE_ELEMENT,
) -> CooccurrenceGraph:
    """One node per cluster; an edge weight counts papers where both endpoints occur.

    Only cross-category pairs are linked. Nodes and edges come out sorted by
    (category, label) so the result is reproducible.
    """
    view = View.parse(view)
    allowed = _VIEW_CATEGORIES[view]
    index = cluster_index(clusters)
    by_id = {c.id: c for c in clusters}
    per_paper: dict[str, set[str]] = defaultdict(set)
    for m in mentions:
        cid = index.get((m.category, m.normalized))
        if cid is None:
            raise DataIntegrityError(
                f"mention {m.surface!r} ({m.category.value}, paper {m.paper_id}) maps to no cluster")
        if m.category in allowed:
            per_paper[m.paper_id].add(cid)
    weights: dict[tuple[str, str], int] = defaultdict(int)
    for pid in sorted(per_paper):
        for a, b in combinations(sorted(per_paper[pid]), 2):
            if by_id[a].category != by_id[b].category:
                weights[(a, b)] += 1
    nodes = [GraphNode(c.id, c.category, c.label, c.paper_freq) for c in clusters if c.category in allowed]
    return _canonical(nodes, weights, view)


def graph_from_edges(edges: Iterable[tuple], nodes: Iterable[str] = (),
                     view: View = View.THREE_ELEMENT) -> CooccurrenceGraph:
    """Build a plain graph from ``(a, b)`` or ``(a, b, weight)`` tuples; labels equal ids.

    Nodes are all Objective with paper_freq 1. Meant for exercising the graph algorithms.
    """
    weights: dict[tuple[str, str], int] = {}
    names: set[str] = {str(n) for n in nodes}
    for e in edges:
        a, b = str(e[0]), str(e[1])
        if a == b:
            raise ValueError("self-loops are not allowed")
        names.update((a, b))
        key = (min(a, b), max(a, b))
        weights[key] = int(e[2]) if len(e) > 2 else 1
    gnodes = [GraphNode(n, Category.OBJECTIVE, n, 1) for n in names]
    return _canonical(gnodes, weights, view)


def top_frequencies(clusters: Sequence[SynonymCluster], category: Category, k: int) -> list[tuple[str, int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    category = Category.parse(category)
    ranked = sorted(((c.label, c.paper_freq) for c in clusters if c.category == category),
                    key=lambda t: (-t[1], t[0]))
    return ranked[:k]


# --------------------------------------------------------------------------
# export

def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _to_dot(g: CooccurrenceGraph) -> str:
    lines = ["graph G {"]
    for n in g.nodes:
        lines.append(f"  {_dot_id(n.cluster_id)} [label={_dot_id(n.label)}, "
                     f"category={_dot_id(n.category.value)}, paper_freq={n.paper_freq}];")
    for e in g.edges:
        lines.append(f"  {_dot_id(e.a)} -- {_dot_id(e.b)} [weight={e.weight}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _to_graphml(g: CooccurrenceGraph) -> str:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns" '
        'xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" '
        'xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns '
        'http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">',
        '  <key id="label" for="node" attr.name="label" attr.type="string"/>',
        '  <key id="category" for="node" attr.name="category" attr.type="string"/>',
        '  <key id="paper_freq" for="node" attr.name="paper_freq" attr.type="int"/>',
        '  <key id="weight" for="edge" attr.name="weight" attr.type="int"/>',
        '  <graph id="G" edgedefault="undirected">',
    ]
    for n in g.nodes:
        out.append(f"    <node id={quoteattr(n.cluster_id)}>")
        out.append(f'      <data key="label">{escape(n.label)}</data>')
        out.append(f'      <data key="category">{escape(n.category.value)}</data>')
        out.append(f'      <data key="paper_freq">{n.paper_freq}</data>')
        out.append("    </node>")
    for e in g.edges:
        out.append(f"    <edge source={quoteattr(e.a)} target={quoteattr(e.b)}>")
        out.append(f'      <data key="weight">{e.weight}</data>')
        out.append("    </edge>")
    out += ["  </graph>", "</graphml>"]
    return "\n".join(out) + "\n"


def export_graph(g: CooccurrenceGraph, fmt: str) -> bytes:
    """Serialize to ``"dot"``, ``"graphml"`` or ``"json"``. Same graph, same bytes."""
    fmt = fmt.lower()
    if fmt == "dot":
        text = _to_dot(g)
    elif fmt == "graphml":
        text = _to_graphml(g)
    elif fmt in ("json", "structuredtext"):
        text = json.dumps(g.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return text.encode("utf-8")


def load_graph(data: bytes | str) -> CooccurrenceGraph:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return CooccurrenceGraph.from_dict(json.loads(data))
