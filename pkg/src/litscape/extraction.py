"""Prompted extraction of objectives, methods, and datasets from paper sections."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol

import requests
import yaml

from .corpus import Paper, select_sections
from .errors import ConfigError, ExtractionError
from .io import read_jsonl
from .model import Category, SectionKind

log = logging.getLogger(__name__)

DEFAULT_CHAR_BUDGET = 12000
DELIMITER = "\n\n---\n\n"
NONE_TOKEN = "NONE"


@dataclass(frozen=True)
class PromptTemplate:
    category: Category
    instruction: str
    question: str
    format_rule: str


_FORMAT_RULE = (
    "Answer with one item per line and nothing else. "
    f"If the text mentions none, answer with the single word {NONE_TOKEN}."
)

TEMPLATES = {
    Category.OBJECTIVE: PromptTemplate(
        Category.OBJECTIVE,
        "You read excerpts of scientific papers and extract the research objective "
        "as a short noun phrase (for example: stock price prediction).",
        "What is the purpose of this study?",
        _FORMAT_RULE,
    ),
    Category.METHOD: PromptTemplate(
        Category.METHOD,
        "You read excerpts of scientific papers and list the machine learning models "
        "and methods by name, as written in the text.",
        "Which models are used in this study?",
        _FORMAT_RULE,
    ),
    Category.DATASET: PromptTemplate(
        Category.DATASET,
        "You read excerpts of scientific papers and list the names of the datasets "
        "and data sources, as written in the text.",
        "Which datasets are used?",
        _FORMAT_RULE,
    ),
}


@dataclass(frozen=True)
class Mention:
    paper_id: str
    category: Category
    surface: str
    section_kind: SectionKind
    normalized: str

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "category": self.category.value,
            "surface": self.surface,
            "normalized": self.normalized,
            "section_kind": self.section_kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mention":
        return cls(d["paper_id"], Category.parse(d["category"]), d["surface"],
                   SectionKind(d["section_kind"]), d["normalized"])

    def sort_key(self):
        return (self.paper_id, self.category.order, self.normalized, self.surface)


_PARENS = re.compile(r"\([^()]*\)|\[[^\[\]]*\]")


def normalize(surface: str) -> str:
    """Lowercase, drop parenthetical asides, collapse whitespace.

    If dropping the asides would leave nothing (``"(SVM)"``), only the bracket
    characters are removed.
    """
    text = surface.strip().lower()
    stripped = text
    while True:
        nxt = _PARENS.sub(" ", stripped)
        if nxt == stripped:
            break
        stripped = nxt
    stripped = re.sub(r"\s+", " ", stripped).strip()
    if not stripped:
        stripped = re.sub(r"\s+", " ", re.sub(r"[()\[\]]", " ", text)).strip()
    return stripped


def make_mention(paper_id: str, category: Category, surface: str, section_kind: SectionKind) -> Mention:
    surface = surface.strip()
    return Mention(paper_id, category, surface, section_kind, normalize(surface))


def render_prompt(template: PromptTemplate, section_text: str, budget: int = DEFAULT_CHAR_BUDGET) -> str:
    text = section_text[:budget]
    return DELIMITER.join([template.instruction, template.question, template.format_rule, text])


_BULLET = re.compile(r"^\s*(?:[-*•]+|\(?(?:\d+|[a-zA-Z])[.)](?=\s))\s*")
_QUOTES = "\"'`“”‘’"


def parse_response(raw: str) -> list[str]:
    """Turn a line-per-item answer into a list of surfaces."""
    if raw is None:
        return []
    if raw.strip().strip(_QUOTES + ".").strip().upper() == NONE_TOKEN:
        return []
    items: list[str] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        item = _BULLET.sub("", line, count=1).strip()
        item = item.strip(_QUOTES).strip()
        if not item or item.upper() == NONE_TOKEN:
            continue
        key = item.casefold()
        if key in seen:
            continue
        seen.add(key)
        items.append(item)
    return items


# --------------------------------------------------------------------------
# backends

class ExtractionBackend(Protocol):
    model_id: str

    def complete(self, prompt: str) -> str: ...


class MockBackend:
    """Substring-rule stand-in for a chat model.

    Each rule is ``{"contains": str, "emit": [str, ...]}`` with an optional
    ``"category"``; a rule fires when its substring occurs (case-insensitively)
    in the section-text part of the prompt.
    """

    model_id = "mock"

    def __init__(self, rules: list[dict]):
        self.rules = []
        for r in rules:
            if "contains" not in r or "emit" not in r:
                raise ConfigError(f"mock rule needs 'contains' and 'emit': {r!r}")
            emit = [r["emit"]] if isinstance(r["emit"], str) else list(r["emit"])
            cat = Category.parse(r["category"]) if r.get("category") else None
            self.rules.append((r["contains"].lower(), emit, cat))

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if isinstance(data, dict):
            data = data.get("rules", [])
        return cls(data or [])

    def complete(self, prompt: str) -> str:
        head, _, text = prompt.rpartition(DELIMITER)
        category = next((c for c, t in TEMPLATES.items() if t.question in head), None)
        haystack = text.lower()
        out: list[str] = []
        for needle, emit, cat in self.rules:
            if cat is not None and cat != category:
                continue
            if needle in haystack:
                out.extend(emit)
        return "\n".join(out) if out else NONE_TOKEN


class ChatBackend:
    """Client for an OpenAI-style ``/chat/completions`` endpoint."""

    system_prompt = "You extract structured information from scientific papers."

    def __init__(self, url: str, model: str, api_key: Optional[str] = None, timeout: float = 120.0):
        self.url = url
        self.model_id = model
        self.api_key = api_key if api_key is not None else os.environ.get("LITSCAPE_API_KEY")
        self.timeout = timeout
        self.session = requests.Session()

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": prompt},
            ],
            "temperature": 0,
        }
        try:
            resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
            raise ExtractionError(f"chat completion failed: {exc}") from exc


# --------------------------------------------------------------------------

def _complete_with_retries(backend, prompt: str, retries: int, backoff: float) -> str:
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt and backoff:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            return backend.complete(prompt)
        except Exception as exc:  # noqa: BLE001 - any backend failure is retried
            last = exc
    raise ExtractionError(f"backend failed after {retries + 1} attempts: {last}")


def extract_mentions(
    paper: Paper,
    category: Category,
    backend: ExtractionBackend,
    *,
    budget: int = DEFAULT_CHAR_BUDGET,
    retries: int = 3,
    backoff: float = 0.5,
) -> list[Mention]:
    category = Category.parse(category)
    template = TEMPLATES[category]
    sections = select_sections(paper, category)
    mentions: list[Mention] = []
    seen: set[str] = set()
    failures = 0
    for section in sections:
        prompt = render_prompt(template, section.body, budget)
        try:
            raw = _complete_with_retries(backend, prompt, retries, backoff)
        except ExtractionError as exc:
            failures += 1
            log.warning("extraction failed for %s/%s section %r: %s",
                        paper.id, category.value, section.heading, exc)
            continue
        for surface in parse_response(raw):
            m = make_mention(paper.id, category, surface, section.kind)
            if not m.normalized or m.normalized in seen:
                continue
            seen.add(m.normalized)
            mentions.append(m)
    if sections and failures == len(sections):
        raise ExtractionError(f"all {failures} sections failed for paper {paper.id!r} ({category.value})")
    return mentions


def extract_corpus(
    papers: Iterable[Paper],
    backend: ExtractionBackend,
    *,
    categories: Iterable[Category] = tuple(Category),
    concurrency: int = 4,
    **kwargs,
) -> list[Mention]:
    """Run every (paper, category) job with bounded parallelism; output order is canonical."""
    jobs = [(p, Category.parse(c)) for p in papers for c in categories]
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        results = list(pool.map(lambda job: extract_mentions(job[0], job[1], backend, **kwargs), jobs))
    out = [m for batch in results for m in batch]
    out.sort(key=Mention.sort_key)
    return out


def load_mentions(path) -> list[Mention]:
    return [Mention.from_dict(d) for d in read_jsonl(Path(path))]


def dumps_mentions(mentions: Iterable[Mention]) -> str:
    return "".join(json.dumps(m.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for m in mentions)
