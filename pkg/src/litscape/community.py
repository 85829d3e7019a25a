"""Girvan-Newman community detection with exact edge betweenness and modularity selection."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import InvalidArgumentError
from .graph import CooccurrenceGraph

Edge = tuple[str, str]

# relative slack when comparing floating betweenness / modularity values for ties
_TIE_EPS = 1e-9


@dataclass
class CommunityPartition:
    assignment: dict[str, int]
    community_count: int
    modularity: float = 0.0

    def communities(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.community_count)]
        for node, c in self.assignment.items():
            groups[c].append(node)
        return [sorted(g) for g in groups]

    def as_sets(self) -> set[frozenset]:
        return {frozenset(g) for g in self.communities()}


@dataclass
class GNTrace:
    removal_order: list[Edge] = field(default_factory=list)
    partitions: list[CommunityPartition] = field(default_factory=list)
    # removal_order index at which each snapshot was taken (0 for the initial components)
    snapshot_at: list[int] = field(default_factory=list)


def _single_source(adj, s, weighted):
    """Brandes forward phase: (stack in non-decreasing distance, predecessors, path counts)."""
    sigma = {s: 1}
    preds: dict[str, list[str]] = {s: []}
    order: list[str] = []
    if not weighted:
        dist = {s: 0}
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                    sigma[w] = 0
                    preds[w] = []
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        return order, preds, sigma
    # distances are sums of 1/weight kept as exact fractions so equal-length paths tie exactly
    dist: dict[str, Fraction] = {}
    seen = {s: Fraction(0)}
    counter = 0
    heap = [(Fraction(0), counter, s, s)]
    while heap:
        d, _, pred, v = heapq.heappop(heap)
        if v in dist:
            continue
        if v != s:
            sigma[v] = sum(sigma[p] for p in preds[v])
        dist[v] = d
        order.append(v)
        for w, wt in adj[v].items():
            nd = d + Fraction(1, wt)
            if w in dist:
                continue
            if w not in seen or nd < seen[w]:
                seen[w] = nd
                preds[w] = [v]
                counter += 1
                heapq.heappush(heap, (nd, counter, v, w))
            elif nd == seen[w]:
                preds[w].append(v)
    return order, preds, sigma


def _betweenness(adj: dict[str, dict[str, int]], nodes: list[str], weighted: bool) -> dict[Edge, float]:
    eb: dict[Edge, float] = {}
    for v in nodes:
        for w in adj[v]:
            if v < w:
                eb[(v, w)] = 0.0
    for s in nodes:
        order, preds, sigma = _single_source(adj, s, weighted)
        delta = dict.fromkeys(order, 0.0)
        for w in reversed(order):
            for v in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + delta[w])
                eb[(v, w) if v < w else (w, v)] += c
                delta[v] += c
    # every unordered pair was counted once from each end
    return {e: b / 2.0 for e, b in eb.items()}


def edge_betweenness(g: CooccurrenceGraph, weighted: bool = False) -> dict[Edge, float]:
    """Exact edge betweenness keyed by ``(a, b)`` as stored in ``g.edges``.

    Unweighted hop counts by default; ``weighted=True`` uses 1/weight as edge length.
    """
    adj = g.adjacency()
    nodes = [n.cluster_id for n in g.nodes]
    raw = _betweenness(adj, nodes, weighted)
    return {(e.a, e.b): raw[(e.a, e.b) if e.a < e.b else (e.b, e.a)] for e in g.edges}


def _components(adj, nodes) -> list[list[str]]:
    seen: set[str] = set()
    comps = []
    for s in nodes:
        if s in seen:
            continue
        seen.add(s)
        comp, stack = [], [s]
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(comp)
    return comps


def _partition_of(groups: list[list[str]], nodes: list[str]) -> CommunityPartition:
    rank = {n: i for i, n in enumerate(nodes)}
    groups = sorted(groups, key=lambda grp: min(rank[n] for n in grp))
    assignment = {n: i for i, grp in enumerate(groups) for n in grp}
    return CommunityPartition({n: assignment[n] for n in nodes}, len(groups))


def modularity(g: CooccurrenceGraph, p: CommunityPartition, weighted: bool = False) -> float:
    """Newman modularity: sum over communities of e_c/m - (d_c/2m)^2."""
    ids = [n.cluster_id for n in g.nodes]
    missing = [n for n in ids if n not in p.assignment]
    if missing:
        raise InvalidArgumentError(f"partition does not assign nodes {missing[:5]}")
    if not g.edges:
        return 0.0
    intra: dict[int, float] = {}
    degree: dict[int, float] = {}
    m = 0.0
    for e in g.edges:
        w = float(e.weight) if weighted else 1.0
        m += w
        ca, cb = p.assignment[e.a], p.assignment[e.b]
        degree[ca] = degree.get(ca, 0.0) + w
        degree[cb] = degree.get(cb, 0.0) + w
        if ca == cb:
            intra[ca] = intra.get(ca, 0.0) + w
    terms = [intra.get(c, 0.0) / m - (d / (2.0 * m)) ** 2 for c, d in degree.items()]
    return math.fsum(terms)


def girvan_newman(g: CooccurrenceGraph, max_removals: Optional[int] = None,
                  weighted: bool = False) -> GNTrace:
    """Remove the top-betweenness edge one at a time, snapshotting each component split.

    The first snapshot is the initial connected components. Ties on betweenness go
    to the edge whose sorted endpoint labels are smallest.
    """
    nodes = [n.cluster_id for n in g.nodes]
    label = {n.cluster_id: n.label for n in g.nodes}
    adj = g.adjacency()
    trace = GNTrace()
    comps = _components(adj, nodes)
    part = _partition_of(comps, nodes)
    part.modularity = modularity(g, part, weighted)
    trace.partitions.append(part)
    trace.snapshot_at.append(0)
    n_comp = len(comps)

    def tie_key(e: Edge):
        a, b = e
        return (tuple(sorted((label[a], label[b]))), tuple(sorted(e)))

    while any(adj[v] for v in nodes):
        if max_removals is not None and len(trace.removal_order) >= max_removals:
            break
        eb = _betweenness(adj, nodes, weighted)
        top = max(eb.values())
        candidates = [e for e, b in eb.items() if b >= top - _TIE_EPS * max(1.0, top)]
        a, b = min(candidates, key=tie_key)
        del adj[a][b]
        del adj[b][a]
        trace.removal_order.append((a, b))
        comps = _components(adj, nodes)
        if len(comps) > n_comp:
            n_comp = len(comps)
            part = _partition_of(comps, nodes)
            part.modularity = modularity(g, part, weighted)
            trace.partitions.append(part)
            trace.snapshot_at.append(len(trace.removal_order))
    return trace


def select_best(trace: GNTrace) -> int:
    """Index of the highest-modularity snapshot; ties prefer fewer communities, then earlier."""
    best_q = max(p.modularity for p in trace.partitions)
    tied = [i for i, p in enumerate(trace.partitions) if p.modularity >= best_q - 1e-12]
    return min(tied, key=lambda i: (trace.partitions[i].community_count, i))


def best_partition(g: CooccurrenceGraph, weighted: bool = False,
                   max_removals: Optional[int] = None) -> CommunityPartition:
    trace = girvan_newman(g, max_removals, weighted)
    return trace.partitions[select_best(trace)]


def communities_report(g: CooccurrenceGraph, trace: GNTrace) -> dict:
    """Structure written to ``communities.json``."""
    label = {n.cluster_id: n.label for n in g.nodes}
    snapshots = []
    prev = 0
    for part, at in zip(trace.partitions, trace.snapshot_at):
        removed = trace.removal_order[prev:at]
        prev = at
        snapshots.append({
            "removed_edges": [[label[a], label[b]] for a, b in removed],
            "communities": [[label[n] for n in grp] for grp in _label_groups(part, g)],
            "ids": part.communities(),
            "modularity": part.modularity,
        })
    return {"view": g.view.value, "snapshots": snapshots, "best_index": select_best(trace) if snapshots else 0}


def _label_groups(part: CommunityPartition, g: CooccurrenceGraph) -> list[list[str]]:
    order = [n.cluster_id for n in g.nodes]
    groups: list[list[str]] = [[] for _ in range(part.community_count)]
    for n in order:
        groups[part.assignment[n]].append(n)
    return groups
