"""Stage runner. Stages talk only through files in the output directory."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from . import __version__
from .clustering import cluster_index, dumps_clusters, make_clusters, SynonymCluster
from .community import CommunityPartition, communities_report, girvan_newman
from .config import PipelineConfig
from .corpus import Paper, build_query, fetch_papers, ingest_local
from .embedding import HttpEmbeddingBackend, LookupEmbeddingBackend, VectorCache, embed_mentions
from .errors import ConfigError, LitscapeError
from .evaluation import evaluate, format_report, load_gold
from .extraction import ChatBackend, MockBackend, dumps_mentions, extract_corpus, load_mentions
from .graph import View, build_cooccurrence, export_graph, load_graph, top_frequencies
from .io import atomic_write_bytes, atomic_write_text, dumps_jsonl, read_jsonl, sha256_file
from .model import Category

log = logging.getLogger(__name__)

CORPUS = "corpus.jsonl"
MENTIONS = "mentions.jsonl"
VECTORS = "vectors.cache"
CLUSTERS = "clusters.jsonl"
DENDROGRAMS = "dendrograms.json"
GRAPH_JSON = "graph.json"
GRAPH_DOT = "graph.dot"
GRAPH_GRAPHML = "graph.graphml"
COMMUNITIES = "communities.json"
REPORT_DIR = "report"
EVAL_JSON = "eval.json"
EVAL_TXT = "eval.txt"
MANIFEST = "manifest.json"
LOCK = ".litscape.lock"

STAGES = ("fetch", "ingest", "extract", "embed", "cluster", "graph", "communities", "report", "eval")

# artifact -> stage(s) that produce it, for missing-input messages
PRODUCERS = {
    CORPUS: "fetch|ingest",
    MENTIONS: "extract",
    VECTORS: "embed",
    CLUSTERS: "cluster",
    GRAPH_JSON: "graph",
    COMMUNITIES: "communities",
}


class StageContext:
    def __init__(self, cfg: PipelineConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def need(self, name: str) -> Path:
        path = self.out / name
        if not path.exists():
            raise ConfigError(f"missing input artifact {name} (produced by stage {PRODUCERS.get(name, '?')}); "
                              f"run that stage first")
        self.inputs.append(path)
        return path

    def write(self, name: str, data: bytes | str) -> Path:
        path = self.out / name
        if isinstance(data, str):
            atomic_write_text(path, data)
        else:
            atomic_write_bytes(path, data)
        self.outputs.append(path)
        return path


# --------------------------------------------------------------------------
# stages

def _write_corpus(ctx: StageContext, papers: list[Paper]):
    ctx.write(CORPUS, dumps_jsonl(p.to_dict() for p in papers))
    log.info("wrote %d papers", len(papers))


def stage_fetch(ctx: StageContext):
    cfg = ctx.cfg
    if not cfg.query:
        raise ConfigError("stage fetch needs corpus.query")
    query = build_query(cfg.query, cfg.category_filter)
    page = min(cfg.page_size, cfg.max_results)
    papers = fetch_papers(query, cfg.max_results, page, url=cfg.arxiv_url, delay=cfg.arxiv_delay,
                          retries=cfg.retries, backoff=cfg.backoff)
    _write_corpus(ctx, papers)


def stage_ingest(ctx: StageContext):
    if not ctx.cfg.local_path:
        raise ConfigError("stage ingest needs corpus.local_path")
    _write_corpus(ctx, ingest_local(ctx.cfg.local_path))


def extraction_backend(cfg: PipelineConfig):
    if cfg.mock_rules:
        return MockBackend.from_file(cfg.mock_rules)
    if cfg.extract_url:
        return ChatBackend(cfg.extract_url, cfg.extract_model)
    raise ConfigError("no extraction backend: set extract.mock_rules or extract.url")


def embedding_backend(cfg: PipelineConfig):
    if cfg.lookup_table:
        return LookupEmbeddingBackend.from_file(cfg.lookup_table, fallback=cfg.lookup_fallback,
                                                prefix=cfg.embed_prefix)
    if cfg.embed_url:
        return HttpEmbeddingBackend(cfg.embed_url, cfg.embed_model, dim=cfg.embed_dim, prefix=cfg.embed_prefix)
    raise ConfigError("no embedding backend: set embed.lookup_table or embed.url")


def stage_extract(ctx: StageContext):
    papers = [Paper.from_dict(d) for d in read_jsonl(ctx.need(CORPUS))]
    backend = extraction_backend(ctx.cfg)
    mentions = extract_corpus(papers, backend, concurrency=ctx.cfg.concurrency,
                              budget=ctx.cfg.char_budget, retries=ctx.cfg.retries, backoff=ctx.cfg.backoff)
    ctx.write(MENTIONS, dumps_mentions(mentions))
    log.info("wrote %d mentions", len(mentions))


def stage_embed(ctx: StageContext):
    mentions = load_mentions(ctx.need(MENTIONS))
    backend = embedding_backend(ctx.cfg)
    surfaces = sorted({m.normalized for m in mentions})
    target = ctx.out / VECTORS
    if target.exists():
        ctx.inputs.append(target)
    fd, tmp = tempfile.mkstemp(prefix=f".{VECTORS}.", dir=ctx.out)
    os.close(fd)
    os.unlink(tmp)
    try:
        if target.exists():
            shutil.copyfile(target, tmp)
        cache = VectorCache(tmp, model_id=backend.model_id)
        if surfaces:
            embed_mentions(surfaces, backend, cache, batch_size=ctx.cfg.batch_size,
                           retries=ctx.cfg.retries, backoff=ctx.cfg.backoff, concurrency=ctx.cfg.concurrency)
        cache.ensure_file()
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    ctx.outputs.append(target)


def _load_clusters(path) -> list[SynonymCluster]:
    return [SynonymCluster.from_dict(d) for d in read_jsonl(path)]


def stage_cluster(ctx: StageContext):
    mentions = load_mentions(ctx.need(MENTIONS))
    vpath = ctx.need(VECTORS)
    vectors = VectorCache.read(vpath)[2]
    dendros: dict = {}
    clusters = make_clusters(mentions, vectors, ctx.cfg.threshold, dendrograms=dendros)
    ctx.write(CLUSTERS, dumps_clusters(clusters))
    ctx.write(DENDROGRAMS, json.dumps(dendros, indent=1, sort_keys=True) + "\n")
    log.info("wrote %d clusters", len(clusters))


def stage_graph(ctx: StageContext):
    clusters = _load_clusters(ctx.need(CLUSTERS))
    mentions = load_mentions(ctx.need(MENTIONS))
    g = build_cooccurrence(clusters, mentions, View.parse(ctx.cfg.view))
    ctx.write(GRAPH_JSON, export_graph(g, "json"))
    ctx.write(GRAPH_DOT, export_graph(g, "dot"))
    ctx.write(GRAPH_GRAPHML, export_graph(g, "graphml"))


def stage_communities(ctx: StageContext):
    g = load_graph(ctx.need(GRAPH_JSON).read_bytes())
    trace = girvan_newman(g, ctx.cfg.max_removals, ctx.cfg.weighted)
    ctx.write(COMMUNITIES, json.dumps(communities_report(g, trace), indent=2, sort_keys=True) + "\n")


def _tsv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def stage_report(ctx: StageContext):
    # matplotlib is only loaded when a report is rendered
    from .plotting import cooccurrence_chart, frequency_chart

    clusters = _load_clusters(ctx.need(CLUSTERS))
    g = load_graph(ctx.need(GRAPH_JSON).read_bytes())
    comm = json.loads(ctx.need(COMMUNITIES).read_text(encoding="utf-8"))
    k = ctx.cfg.top_k

    ranked = {c: top_frequencies(clusters, c, k) for c in Category}
    members = {(c.category, c.label): c.members for c in clusters}
    rows = [["category", "rank", "label", "paper_freq", "members"]]
    for cat, top in ranked.items():
        for i, (label, freq) in enumerate(top, 1):
            rows.append([cat.value, i, label, freq, "|".join(members[(cat, label)])])
    ctx.write(f"{REPORT_DIR}/frequencies.tsv", _tsv(rows))

    node = g.node_map()
    best = comm["snapshots"][comm["best_index"]] if comm["snapshots"] else {"ids": [], "modularity": 0.0}
    rows = [["community", "cluster_id", "category", "label", "paper_freq"]]
    assignment = {}
    for ci, ids in enumerate(best["ids"]):
        for nid in ids:
            n = node[nid]
            assignment[nid] = ci
            rows.append([ci, nid, n.category.value, n.label, n.paper_freq])
    ctx.write(f"{REPORT_DIR}/communities.tsv", _tsv(rows))

    lines = [f"view: {g.view.value}", f"nodes: {len(g.nodes)}  edges: {len(g.edges)}",
             f"best partition: {len(best['ids'])} communities, modularity {best['modularity']:.4f}", ""]
    for cat, top in ranked.items():
        lines.append(f"most frequent {cat.value.lower()}s:")
        lines += [f"  {freq:>4}  {label}" for label, freq in top] or ["  (none)"]
    ctx.write(f"{REPORT_DIR}/summary.txt", "\n".join(lines) + "\n")

    fig_dir = ctx.out / REPORT_DIR / "figures"
    for path in (frequency_chart(ranked, fig_dir / "frequencies.png"),
                 cooccurrence_chart(g, CommunityPartition(assignment, len(best["ids"])) if assignment else None,
                                    fig_dir / "cooccurrence.png")):
        ctx.outputs.append(path)


def stage_eval(ctx: StageContext):
    if not ctx.cfg.gold:
        raise ConfigError("stage eval needs eval.gold")
    gold_path = Path(ctx.cfg.gold)
    if not gold_path.exists():
        raise ConfigError(f"gold file not found: {gold_path}")
    ctx.inputs.append(gold_path)
    mentions = load_mentions(ctx.need(MENTIONS))
    gold = load_gold(gold_path)
    index = None
    if ctx.cfg.eval_policy == "ClusterAware":
        index = cluster_index(_load_clusters(ctx.need(CLUSTERS)))
    report = evaluate(mentions, gold, ctx.cfg.eval_policy, index)
    ctx.write(EVAL_JSON, json.dumps(report, indent=2, sort_keys=True) + "\n")
    ctx.write(EVAL_TXT, format_report(report))


STAGE_FUNCS: dict[str, Callable[[StageContext], None]] = {
    "fetch": stage_fetch,
    "ingest": stage_ingest,
    "extract": stage_extract,
    "embed": stage_embed,
    "cluster": stage_cluster,
    "graph": stage_graph,
    "communities": stage_communities,
    "report": stage_report,
    "eval": stage_eval,
}


# --------------------------------------------------------------------------
# lock + manifest

def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    for _ in range(2):
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            try:
                pid = int(lock.read_text().strip() or 0)
            except (OSError, ValueError):
                pid = 0
            if pid and _pid_alive(pid):
                raise ConfigError(f"output directory {out} is locked by process {pid}")
            lock.unlink(missing_ok=True)
    else:
        raise ConfigError(f"cannot lock output directory {out}")
    with os.fdopen(fd, "w") as fh:
        fh.write(str(os.getpid()))
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _update_manifest(ctx: StageContext, stage: str, started: str, status: str):
    path = ctx.out / MANIFEST
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        manifest = {}
    manifest["tool_version"] = __version__
    manifest["config"] = ctx.cfg.snapshot()

    def digests(paths):
        return {str(p.relative_to(ctx.out)) if p.is_relative_to(ctx.out) else str(p): sha256_file(p)
                for p in paths if p.exists()}

    manifest.setdefault("stages", {})[stage] = {
        "started": started,
        "finished": _now(),
        "status": status,
        "inputs": digests(ctx.inputs),
        "outputs": digests(ctx.outputs),
    }
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_stage(stage: str, cfg: PipelineConfig, out: Path) -> int:
    ctx = StageContext(cfg, out)
    started = _now()
    try:
        STAGE_FUNCS[stage](ctx)
    except LitscapeError as exc:
        log.error("stage %s failed: %s", stage, exc)
        _update_manifest(ctx, stage, started, f"failed: {type(exc).__name__}")
        exc.stage = stage
        raise
    _update_manifest(ctx, stage, started, "ok")
    return 0


def run_stage(stage: str, cfg: PipelineConfig) -> int:
    """Run one stage under the output-directory lock. Raises LitscapeError on failure."""
    if stage not in STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}")
    out = Path(cfg.output_dir)
    with output_lock(out):
        return _run_stage(stage, cfg, out)


def pipeline_stages(cfg: PipelineConfig) -> list[str]:
    stages = ["fetch" if cfg.query else "ingest", "extract", "embed", "cluster", "graph", "communities", "report"]
    if cfg.gold:
        stages.append("eval")
    return stages


def run_pipeline(cfg: PipelineConfig) -> int:
    out = Path(cfg.output_dir)
    with output_lock(out):
        for stage in pipeline_stages(cfg):
            log.info("stage %s", stage)
            _run_stage(stage, cfg, out)
    return 0
