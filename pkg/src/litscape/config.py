"""Pipeline configuration: a flat ``section.key: value`` YAML (or JSON) file."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

# flat key -> dataclass attribute
_KEYS = {
    "corpus.query": "query",
    "corpus.category": "category_filter",
    "corpus.max_results": "max_results",
    "corpus.page_size": "page_size",
    "corpus.local_path": "local_path",
    "corpus.arxiv_url": "arxiv_url",
    "corpus.delay": "arxiv_delay",
    "extract.url": "extract_url",
    "extract.model": "extract_model",
    "extract.mock_rules": "mock_rules",
    "extract.char_budget": "char_budget",
    "embed.url": "embed_url",
    "embed.model": "embed_model",
    "embed.prefix": "embed_prefix",
    "embed.dim": "embed_dim",
    "embed.lookup_table": "lookup_table",
    "embed.fallback": "lookup_fallback",
    "embed.batch_size": "batch_size",
    "backend.retries": "retries",
    "backend.backoff": "backoff",
    "cluster.threshold": "threshold",
    "graph.view": "view",
    "gn.max_removals": "max_removals",
    "gn.weighted": "weighted",
    "report.top_k": "top_k",
    "eval.gold": "gold",
    "eval.policy": "eval_policy",
    "output_dir": "output_dir",
    "concurrency": "concurrency",
}
_PATH_FIELDS = {"local_path", "mock_rules", "lookup_table", "gold", "output_dir"}


@dataclass
class PipelineConfig:
    query: Optional[list[str]] = None
    category_filter: Optional[str] = None
    max_results: int = 200
    page_size: int = 50
    local_path: Optional[str] = None
    arxiv_url: str = "http://export.arxiv.org/api/query"
    arxiv_delay: float = 3.0

    extract_url: Optional[str] = None
    extract_model: str = "llama3-8b"
    mock_rules: Optional[str] = None
    char_budget: int = 12000

    embed_url: Optional[str] = None
    embed_model: str = "e5"
    embed_prefix: str = ""
    embed_dim: Optional[int] = None
    lookup_table: Optional[str] = None
    lookup_fallback: str = "hash"
    batch_size: int = 64

    retries: int = 3
    backoff: float = 0.5

    threshold: float = 0.7
    view: str = "ThreeElement"
    max_removals: Optional[int] = None
    weighted: bool = False
    top_k: int = 10

    gold: Optional[str] = None
    eval_policy: str = "NormalizedExact"

    output_dir: str = "out"
    concurrency: int = 4

    def validate(self) -> "PipelineConfig":
        if bool(self.query) == bool(self.local_path):
            raise ConfigError("set exactly one corpus source: corpus.query or corpus.local_path")
        if not (isinstance(self.threshold, (int, float)) and self.threshold > 0):
            raise ConfigError("cluster.threshold must be > 0")
        if int(self.concurrency) < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.max_results < 1 or self.page_size < 1:
            raise ConfigError("corpus.max_results and corpus.page_size must be positive")
        return self

    def snapshot(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: dict, base_dir: Path | None = None) -> "PipelineConfig":
        flat = _flatten(data or {})
        kwargs: dict[str, Any] = {}
        valid = {f.name for f in fields(cls)}
        for key, value in flat.items():
            attr = _KEYS.get(key, key if key in valid else None)
            if attr is None:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[attr] = value
        if isinstance(kwargs.get("query"), str):
            kwargs["query"] = [kwargs["query"]]
        if base_dir is not None:
            for attr in _PATH_FIELDS & kwargs.keys():
                if kwargs[attr] is not None and not os.path.isabs(str(kwargs[attr])):
                    kwargs[attr] = str((base_dir / str(kwargs[attr])).resolve())
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(path=None, overrides: dict | None = None, env=None) -> PipelineConfig:
    """Read a config file, apply environment overrides and explicit overrides, validate."""
    env = os.environ if env is None else env
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{p} must hold a key-value mapping")
        base = p.resolve().parent
    cfg = PipelineConfig.from_mapping(data, base)
    if env.get("LITSCAPE_EXTRACT_URL"):
        cfg.extract_url = env["LITSCAPE_EXTRACT_URL"]
        cfg.mock_rules = None
    if env.get("LITSCAPE_EMBED_URL"):
        cfg.embed_url = env["LITSCAPE_EMBED_URL"]
        cfg.lookup_table = None
    for k, v in (overrides or {}).items():
        setattr(cfg, k, v)
    return cfg.validate()
