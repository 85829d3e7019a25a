"""Paper collection (arXiv Atom API or a local directory) and section segmentation."""

from __future__ import annotations

import logging
import re
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import requests

from .errors import (
    EmptyCorpusError,
    EmptyPaperError,
    FeedParseError,
    InvalidArgumentError,
    NetworkError,
)
from .model import Category, SectionKind, Source

log = logging.getLogger(__name__)

ARXIV_API_URL = "http://export.arxiv.org/api/query"
ATOM_NS = {
    "atom": "http://www.w3.org/2005/Atom",
    "opensearch": "http://a9.com/-/spec/opensearch/1.1/",
}


@dataclass
class Section:
    kind: SectionKind
    heading: str
    body: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "heading": self.heading, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> "Section":
        return cls(SectionKind(d["kind"]), d["heading"], d["body"])


@dataclass
class Paper:
    id: str
    title: str
    abstract: str
    sections: list[Section] = field(default_factory=list)
    source: Source = Source.LOCAL_FILE
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "sections": [s.to_dict() for s in self.sections],
            "source": self.source.value,
            "fetched_at": _iso(self.fetched_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Paper":
        return cls(
            id=d["id"],
            title=d.get("title", ""),
            abstract=d.get("abstract", ""),
            sections=[Section.from_dict(s) for s in d.get("sections", [])],
            source=Source(d.get("source", Source.LOCAL_FILE.value)),
            fetched_at=datetime.fromisoformat(d["fetched_at"].replace("Z", "+00:00")),
        )


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# arXiv

def build_query(keywords: list[str], category_filter: Optional[str] = None) -> str:
    """AND-combine quoted keyword phrases, optionally restricted to an arXiv category.

    >>> build_query(["Machine Learning", "Dataset"], "q-fin")
    'cat:q-fin* AND all:"Machine Learning" AND all:"Dataset"'
    """
    if not keywords:
        raise InvalidArgumentError("keyword list is empty")
    terms = []
    for kw in keywords:
        kw = (kw or "").replace('"', " ").strip()
        kw = re.sub(r"\s+", " ", kw)
        if not kw:
            raise InvalidArgumentError("empty keyword")
        terms.append(f'all:"{kw}"')
    if category_filter and category_filter.strip():
        cat = category_filter.strip()
        # archive-level filters ("q-fin") cover every subject class ("q-fin.ST", ...)
        if "." not in cat and not cat.endswith("*"):
            cat += "*"
        terms.insert(0, f"cat:{cat}")
    return " AND ".join(terms)


def _text(el: Optional[ET.Element]) -> Optional[str]:
    if el is None or el.text is None:
        return None
    return re.sub(r"\s+", " ", el.text).strip()


def parse_feed(xml_text: str, offset: int = 0) -> tuple[list[Paper], Optional[int]]:
    """Parse one Atom page. Returns the papers and opensearch:totalResults (if present)."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise FeedParseError(f"feed is not well-formed XML: {exc}") from exc
    total = _text(root.find("opensearch:totalResults", ATOM_NS))
    now = datetime.now(timezone.utc)
    papers = []
    for i, entry in enumerate(root.findall("atom:entry", ATOM_NS)):
        index = offset + i
        raw_id = _text(entry.find("atom:id", ATOM_NS))
        title = _text(entry.find("atom:title", ATOM_NS))
        summary = _text(entry.find("atom:summary", ATOM_NS))
        if not raw_id:
            raise FeedParseError(f"entry {index}: missing <id>", index)
        if "/api/errors" in raw_id:
            raise FeedParseError(f"entry {index}: API error: {summary}", index)
        if title is None or summary is None:
            missing = "title" if title is None else "summary"
            raise FeedParseError(f"entry {index}: missing <{missing}>", index)
        pid = raw_id.split("/abs/", 1)[-1]
        papers.append(Paper(pid, title, summary, [], Source.ARXIV_API, now))
    try:
        total_n = int(total) if total is not None else None
    except ValueError:
        total_n = None
    return papers, total_n


def _get_with_retries(session, url, params, retries, backoff, timeout) -> str:
    last = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = session.get(url, params=params, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last = exc
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise NetworkError(f"arXiv API returned HTTP {resp.status_code}")
        return resp.text
    raise NetworkError(f"arXiv API unreachable after {retries + 1} attempts: {last}")


def fetch_papers(
    query: str,
    max_results: int,
    page_size: int,
    *,
    url: str = ARXIV_API_URL,
    delay: float = 3.0,
    retries: int = 3,
    backoff: float = 1.0,
    timeout: float = 30.0,
    session: Optional[requests.Session] = None,
) -> list[Paper]:
    """Page through the arXiv API sequentially, sleeping ``delay`` seconds between pages."""
    if max_results < 1 or page_size < 1:
        raise InvalidArgumentError("max_results and page_size must be positive")
    if page_size > max_results:
        raise InvalidArgumentError("page_size must not exceed max_results")
    session = session or requests.Session()
    seen: set[str] = set()
    papers: list[Paper] = []
    start = 0
    while start < max_results:
        if start:
            time.sleep(delay)
        want = min(page_size, max_results - start)
        params = {"search_query": query, "start": start, "max_results": want}
        log.info("arXiv page start=%d max_results=%d", start, want)
        text = _get_with_retries(session, url, params, retries, backoff, timeout)
        page, total = parse_feed(text, offset=start)
        for p in page:
            if p.id not in seen:
                seen.add(p.id)
                papers.append(p)
        start += want
        if len(page) < want or (total is not None and start >= total):
            break
    return papers[:max_results]


# --------------------------------------------------------------------------
# local files

_TEX_COMMENT = re.compile(r"(?<!\\)%.*$", re.MULTILINE)


def strip_latex(raw: str) -> str:
    """Drop comments and everything outside the document environment."""
    text = _TEX_COMMENT.sub("", raw)
    begin = text.find(r"\begin{document}")
    if begin >= 0:
        text = text[begin + len(r"\begin{document}"):]
    end = text.find(r"\end{document}")
    if end >= 0:
        text = text[:end]
    return text


def _tex_title(raw: str) -> Optional[str]:
    m = re.search(r"\\title\{([^{}]*)\}", _TEX_COMMENT.sub("", raw))
    return re.sub(r"\s+", " ", m.group(1)).strip() if m else None


def _tex_abstract(text: str) -> str:
    m = re.search(r"\\begin\{abstract\}(.*?)\\end\{abstract\}", text, re.DOTALL)
    return re.sub(r"\s+", " ", m.group(1)).strip() if m else ""


def ingest_local(path) -> list[Paper]:
    root = Path(path)
    if not root.is_dir():
        raise InvalidArgumentError(f"not a readable directory: {root}")
    papers: list[Paper] = []
    seen: set[str] = set()
    for f in sorted(root.iterdir()):
        if f.suffix.lower() not in (".txt", ".tex") or not f.is_file():
            continue
        try:
            raw = f.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipping unreadable file %s: %s", f, exc)
            continue
        if f.stem in seen:
            log.warning("skipping %s: duplicate paper id %r", f, f.stem)
            continue
        is_tex = f.suffix.lower() == ".tex"
        body = strip_latex(raw) if is_tex else raw
        if not body.strip():
            log.warning("skipping empty file %s", f)
            continue
        sections = segment_sections(body)
        if is_tex:
            title = _tex_title(raw) or f.stem
            abstract = _tex_abstract(body)
        else:
            title = next((ln.strip() for ln in raw.splitlines() if ln.strip()), f.stem)
            abstract = next((s.body for s in sections if s.heading.strip().lower() == "abstract"), "")
        mtime = datetime.fromtimestamp(int(f.stat().st_mtime), timezone.utc)
        papers.append(Paper(f.stem, title, abstract, sections, Source.LOCAL_FILE, mtime))
        seen.add(f.stem)
    if not papers:
        raise EmptyCorpusError(f"no ingestible .txt/.tex files in {root}")
    return papers


# --------------------------------------------------------------------------
# segmentation

# first match wins
_KIND_RULES = [
    (re.compile(r"\bintroduction\b", re.I), SectionKind.INTRODUCTION),
    (re.compile(r"\bconclu", re.I), SectionKind.CONCLUSION),
    (re.compile(r"\bexperiment", re.I), SectionKind.EXPERIMENTS),
    (re.compile(r"\bdata(?:sets?)?\b", re.I), SectionKind.DATA),
    (re.compile(r"\b(?:method|approach|model)", re.I), SectionKind.METHODS),
    (re.compile(r"\bresult", re.I), SectionKind.RESULTS),
]

_LATEX_SECTION = re.compile(r"\\section\*?\{((?:[^{}]|\{[^{}]*\})*)\}")
_NUMBERED = re.compile(r"^(?:\d+(?:\.\d+)*\.?|[IVX]+\.)\s+\S")
_SMALL_WORDS = {"a", "an", "and", "as", "at", "by", "for", "in", "of", "on", "or", "the", "to", "with", "vs"}


def classify_heading(heading: str) -> SectionKind:
    for pattern, kind in _KIND_RULES:
        if pattern.search(heading):
            return kind
    return SectionKind.OTHER


def _is_plain_heading(line: str) -> bool:
    s = line.strip()
    if not s or len(s) > 80 or s[-1] in ".,;:?!":
        return False
    words = s.split()
    if len(words) > 10:
        return False
    if _NUMBERED.match(s):
        return s.split(None, 1)[1][:1].isupper()
    if len(words) > 8 or not s[0].isupper():
        return False
    if s.isupper() and any(c.isalpha() for c in s):
        return True
    for w in words:
        alpha = w.lstrip("(\"'")
        if not alpha or not alpha[0].isalpha():
            continue
        if alpha.lower() in _SMALL_WORDS:
            continue
        if not alpha[0].isupper():
            return False
    return True


def _assemble(preamble: str, parts: list[tuple[str, str]]) -> list[Section]:
    out = []
    if preamble.strip():
        out.append(Section(SectionKind.OTHER, "preamble", preamble.strip()))
    for heading, body in parts:
        body = body.strip()
        if body:
            out.append(Section(classify_heading(heading), heading.strip(), body))
    return out


def segment_sections(raw: str) -> list[Section]:
    """Split text into sections on LaTeX ``\\section{..}`` commands or plain-text heading lines.

    LaTeX mode is used whenever the text contains at least one ``\\section``. Plain-text
    headings are numbered lines ("3. Experimental Setup") or short title-case / all-caps
    lines that start the text or follow a blank line. Text before the first heading becomes
    an Other section headed "preamble"; sections with empty bodies are dropped.
    """
    if not raw or not raw.strip():
        raise InvalidArgumentError("cannot segment empty text")

    matches = list(_LATEX_SECTION.finditer(raw))
    if matches:
        preamble = raw[: matches[0].start()]
        parts = []
        for i, m in enumerate(matches):
            end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
            parts.append((m.group(1), raw[m.end():end]))
        sections = _assemble(preamble, parts)
    else:
        lines = raw.splitlines()
        preamble_lines: list[str] = []
        parts = []
        prev_blank = True
        for line in lines:
            if prev_blank and _is_plain_heading(line):
                parts.append((line, []))
            elif parts:
                parts[-1][1].append(line)
            else:
                preamble_lines.append(line)
            prev_blank = not line.strip()
        sections = _assemble("\n".join(preamble_lines), [(h, "\n".join(b)) for h, b in parts])

    if not sections:
        sections = [Section(SectionKind.OTHER, "preamble", raw.strip())]
    return sections


_TARGETS = {
    Category.OBJECTIVE: {SectionKind.INTRODUCTION},
    Category.METHOD: {SectionKind.METHODS, SectionKind.RESULTS},
    Category.DATASET: {SectionKind.DATA, SectionKind.EXPERIMENTS},
}


def select_sections(paper: Paper, category: Category) -> list[Section]:
    """Sections to prompt for ``category``; falls back to all sections, then to the abstract."""
    targets = _TARGETS[Category.parse(category)]
    chosen = [s for s in paper.sections if s.kind in targets]
    if chosen:
        return chosen
    if paper.sections:
        return list(paper.sections)
    if paper.abstract and paper.abstract.strip():
        return [Section(SectionKind.OTHER, "abstract", paper.abstract.strip())]
    raise EmptyPaperError(f"paper {paper.id!r} has neither sections nor abstract")
