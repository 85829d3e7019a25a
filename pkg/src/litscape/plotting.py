"""Report figures: frequency bar charts and a community-colored co-occurrence graph."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .community import CommunityPartition  # noqa: E402
from .graph import CooccurrenceGraph  # noqa: E402
from .model import Category  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.family": "sans-serif",
    "font.sans-serif": ["DejaVu Sans"],
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "svg.hashsalt": "litscape",
}

CATEGORY_COLORS = {
    Category.OBJECTIVE: "#2b8cbe",
    Category.METHOD: "#7bccc4",
    Category.DATASET: "#e6550d",
}
CATEGORY_MARKERS = {Category.OBJECTIVE: "o", Category.METHOD: "s", Category.DATASET: "D"}
COMMUNITY_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]

# pinned so repeated runs write identical bytes
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
    return path


def frequency_chart(ranked: dict[Category, list[tuple[str, int]]], path) -> Path:
    """Horizontal bars of paper frequency, one panel per category."""
    cats = [c for c in Category if c in ranked]
    with plt.rc_context(STYLE):
        width = 7.0
        fig, axes = plt.subplots(1, max(1, len(cats)), figsize=(width, width * GOLDEN * 0.8), squeeze=False)
        for ax, cat in zip(axes[0], cats):
            rows = ranked[cat][::-1]
            labels = [r[0] for r in rows]
            values = [r[1] for r in rows]
            ax.barh(range(len(rows)), values, color=CATEGORY_COLORS[cat])
            ax.set_yticks(range(len(rows)))
            ax.set_yticklabels(labels)
            ax.set_xlabel("papers")
            ax.set_title(cat.value)
            ax.xaxis.get_major_locator().set_params(integer=True)
        fig.tight_layout()
        return _save(fig, Path(path))


def cooccurrence_chart(g: CooccurrenceGraph, partition: CommunityPartition | None, path) -> Path:
    """Nodes on a circle grouped by community; edge width follows co-occurrence weight."""
    nodes = list(g.nodes)
    if partition is not None:
        nodes.sort(key=lambda n: (partition.assignment[n.cluster_id], n.sort_key()))
    k = max(1, len(nodes))
    pos = {n.cluster_id: (math.cos(2 * math.pi * i / k), math.sin(2 * math.pi * i / k))
           for i, n in enumerate(nodes)}
    max_w = max((e.weight for e in g.edges), default=1)
    max_f = max((n.paper_freq for n in nodes), default=1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        for e in g.edges:
            (x0, y0), (x1, y1) = pos[e.a], pos[e.b]
            ax.plot([x0, x1], [y0, y1], color="0.6", lw=0.5 + 2.5 * e.weight / max_w, zorder=1)
        for n in nodes:
            x, y = pos[n.cluster_id]
            if partition is not None:
                color = COMMUNITY_COLORS[partition.assignment[n.cluster_id] % len(COMMUNITY_COLORS)]
            else:
                color = CATEGORY_COLORS[n.category]
            ax.scatter([x], [y], s=30 + 170 * n.paper_freq / max_f, c=color,
                       marker=CATEGORY_MARKERS[n.category], edgecolors="k", linewidths=0.4, zorder=2)
            ax.annotate(n.label, (x, y), xytext=(1.12 * x, 1.12 * y), ha="center", va="center", fontsize=6)
        for cat in Category:
            if any(n.category == cat for n in nodes):
                ax.scatter([], [], marker=CATEGORY_MARKERS[cat], c="w", edgecolors="k", label=cat.value)
        ax.legend(loc="lower right")
        ax.set_title(f"Co-occurrence graph ({g.view.value})")
        ax.set_xlim(-1.45, 1.45)
        ax.set_ylim(-1.45, 1.45)
        ax.set_aspect("equal")
        ax.axis("off")
        return _save(fig, Path(path))
