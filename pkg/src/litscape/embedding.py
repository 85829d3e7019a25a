"""Unit-norm text embeddings behind a pluggable backend, with a binary on-disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import requests

from .errors import DegenerateEmbeddingError, EmbeddingError, InvalidArgumentError

log = logging.getLogger(__name__)


class EmbeddingVector:
    """A unit-norm float32 vector. Construct with :meth:`from_raw` to normalize."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidArgumentError("embedding must be a non-empty 1-D sequence")
        arr.setflags(write=False)
        self.values = arr

    @classmethod
    def from_raw(cls, raw, surface: str = "") -> "EmbeddingVector":
        arr = np.asarray(raw, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if not math.isfinite(norm) or norm == 0.0:
            raise DegenerateEmbeddingError(f"zero-norm embedding for {surface!r}", [surface])
        return cls(arr / norm)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        return isinstance(other, EmbeddingVector) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"EmbeddingVector(dim={self.dim})"


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.dim != v.dim:
        raise InvalidArgumentError(f"dimension mismatch: {u.dim} vs {v.dim}")
    # fsum is order-independent, so sim(u, v) == sim(v, u) bit for bit
    dot = math.fsum(float(a) * float(b) for a, b in zip(u.values, v.values))
    return max(-1.0, min(1.0, dot))


# --------------------------------------------------------------------------
# backends

class EmbeddingBackend(Protocol):
    model_id: str
    dim: int

    def embed(self, texts: list[str]) -> list[Sequence[float]]: ...


class HttpEmbeddingBackend:
    """OpenAI-style ``/embeddings`` endpoint: ``{model, input}`` -> ``data[i].embedding``."""

    def __init__(self, url: str, model: str, dim: Optional[int] = None, prefix: str = "",
                 api_key: Optional[str] = None, timeout: float = 60.0):
        self.url = url
        self.model = model
        self.prefix = prefix
        self.dim = dim
        self.api_key = api_key if api_key is not None else os.environ.get("LITSCAPE_API_KEY")
        self.timeout = timeout
        self.session = requests.Session()

    @property
    def model_id(self) -> str:
        return f"{self.model}|{self.prefix}" if self.prefix else self.model

    def embed(self, texts):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "input": [self.prefix + t for t in texts]}
        try:
            resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
            vectors = [d["embedding"] for d in data]
        except (requests.RequestException, KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"embedding request failed: {exc}", texts) from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"expected {len(texts)} embeddings, got {len(vectors)}", texts)
        if self.dim is None and vectors:
            self.dim = len(vectors[0])
        return vectors


class LookupEmbeddingBackend:
    """Table-driven embeddings for tests and offline runs.

    Texts missing from the table get a pseudo-random Gaussian vector seeded by
    their SHA-256 digest (``fallback="hash"``) or raise (``fallback="error"``).
    """

    def __init__(self, table: dict[str, Sequence[float]], dim: Optional[int] = None,
                 fallback: str = "hash", model_id: str = "lookup", prefix: str = ""):
        if dim is None:
            if not table:
                raise InvalidArgumentError("empty lookup table needs an explicit dim")
            dim = len(next(iter(table.values())))
        self.table = {k: list(map(float, v)) for k, v in table.items()}
        for k, v in self.table.items():
            if len(v) != dim:
                raise InvalidArgumentError(f"lookup vector for {k!r} has dim {len(v)}, expected {dim}")
        self.dim = dim
        self.fallback = fallback
        self.model_id = model_id
        self.prefix = prefix
        self.calls = 0

    @classmethod
    def from_file(cls, path, **kwargs) -> "LookupEmbeddingBackend":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if "vectors" in data:
            kwargs.setdefault("dim", data.get("dim"))
            kwargs.setdefault("model_id", data.get("model_id", "lookup"))
            data = data["vectors"]
        return cls(data, **kwargs)

    def _hash_vector(self, text: str) -> list[float]:
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
        return np.random.default_rng(seed).standard_normal(self.dim).tolist()

    def embed(self, texts):
        self.calls += 1
        out = []
        for t in texts:
            key = self.prefix + t
            if key in self.table:
                out.append(self.table[key])
            elif self.fallback == "hash":
                out.append(self._hash_vector(key))
            else:
                raise EmbeddingError(f"no lookup vector for {t!r}", [t])
        return out


# --------------------------------------------------------------------------
# cache

_U32 = struct.Struct("<I")


class VectorCache:
    """Append-only cache keyed by (model_id, surface).

    File layout (little-endian): u32 model-id length, model-id UTF-8 bytes, u32 dim;
    then per record: u32 surface length, surface UTF-8 bytes, dim float32 values.
    A file written for another model id is discarded on open.
    """

    def __init__(self, path=None, model_id: str = "", dim: Optional[int] = None):
        self.path = Path(path) if path else None
        self.model_id = model_id
        self.dim = dim
        self._vectors: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            self._load()

    @staticmethod
    def read(path) -> tuple[str, int, dict[str, EmbeddingVector]]:
        data = Path(path).read_bytes()
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(data):
                raise EmbeddingError(f"truncated vector cache {path}")
            chunk = data[pos:pos + n]
            pos += n
            return chunk

        (mlen,) = _U32.unpack(take(4))
        model_id = take(mlen).decode("utf-8")
        (dim,) = _U32.unpack(take(4))
        vectors = {}
        while pos < len(data):
            (slen,) = _U32.unpack(take(4))
            surface = take(slen).decode("utf-8")
            vectors[surface] = EmbeddingVector(np.frombuffer(take(4 * dim), dtype="<f4"))
        return model_id, dim, vectors

    def _load(self):
        model_id, dim, vectors = self.read(self.path)
        if self.model_id and model_id != self.model_id:
            log.info("vector cache %s belongs to model %r; starting fresh", self.path, model_id)
            self.path.unlink()
            return
        self.model_id = model_id
        if self.dim is not None and self.dim != dim:
            raise EmbeddingError(f"cache dim {dim} does not match backend dim {self.dim}")
        self.dim = dim
        self._vectors = vectors

    def __contains__(self, surface: str) -> bool:
        return surface in self._vectors

    def __len__(self):
        return len(self._vectors)

    def get(self, surface: str) -> Optional[EmbeddingVector]:
        return self._vectors.get(surface)

    def ensure_file(self):
        """Create the file with just its header if it does not exist yet."""
        if self.path is None or self.path.exists():
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        mid = self.model_id.encode("utf-8")
        self.path.write_bytes(_U32.pack(len(mid)) + mid + _U32.pack(self.dim or 0))

    def put_many(self, items: list[tuple[str, EmbeddingVector]]):
        with self._lock:
            fresh = [(s, v) for s, v in items if s not in self._vectors]
            if not fresh:
                return
            if self.dim is None:
                self.dim = fresh[0][1].dim
            for s, v in fresh:
                if v.dim != self.dim:
                    raise EmbeddingError(f"vector for {s!r} has dim {v.dim}, cache holds {self.dim}")
                self._vectors[s] = v
            if self.path is None:
                return
            self.ensure_file()
            with open(self.path, "ab") as fh:
                for s, v in fresh:
                    sb = s.encode("utf-8")
                    fh.write(_U32.pack(len(sb)) + sb + v.values.astype("<f4").tobytes())


def _embed_batch(backend, batch, retries, backoff):
    last = None
    for attempt in range(retries + 1):
        if attempt and backoff:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            raw = backend.embed(list(batch))
        except DegenerateEmbeddingError:
            raise
        except Exception as exc:  # noqa: BLE001 - any backend failure is retried
            last = exc
            continue
        if len(raw) != len(batch):
            last = f"backend returned {len(raw)} vectors for {len(batch)} texts"
            continue
        return [(s, EmbeddingVector.from_raw(r, s)) for s, r in zip(batch, raw)]
    raise EmbeddingError(f"embedding failed after {retries + 1} attempts: {last}", batch)


def embed_mentions(
    surfaces: list[str],
    backend: EmbeddingBackend,
    cache: Optional[VectorCache] = None,
    *,
    batch_size: int = 64,
    retries: int = 3,
    backoff: float = 0.5,
    concurrency: int = 1,
) -> list[EmbeddingVector]:
    """Embed ``surfaces`` (order-aligned), consulting and filling ``cache``."""
    if not surfaces:
        raise InvalidArgumentError("no surfaces to embed")
    if any(not s or not s.strip() for s in surfaces):
        raise InvalidArgumentError("empty surface")
    if cache is None:
        cache = VectorCache(model_id=backend.model_id)
    misses = list(dict.fromkeys(s for s in surfaces if s not in cache))
    batches = [misses[i:i + batch_size] for i in range(0, len(misses), batch_size)]
    if batches:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            results = list(pool.map(lambda b: _embed_batch(backend, b, retries, backoff), batches))
        # written in request order whatever the completion order
        for res in results:
            cache.put_many(res)
    return [cache.get(s) for s in surfaces]
