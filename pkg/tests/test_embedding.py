import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from litscape.embedding import (
    EmbeddingVector,
    HttpEmbeddingBackend,
    LookupEmbeddingBackend,
    VectorCache,
    cosine_similarity,
    embed_mentions,
)
from litscape.errors import DegenerateEmbeddingError, EmbeddingError, InvalidArgumentError


def test_normalizes_3_4():
    backend = LookupEmbeddingBackend({"SVM": [3.0, 4.0]})
    [v] = embed_mentions(["SVM"], backend)
    assert v.values.tolist() == pytest.approx([0.6, 0.8], abs=1e-7)


def test_duplicate_surface_one_backend_hit():
    backend = LookupEmbeddingBackend({"a": [1.0, 2.0]})
    v1, v2 = embed_mentions(["a", "a"], backend)
    assert v1 == v2
    assert backend.calls == 1


def test_zero_vector_rejected():
    with pytest.raises(DegenerateEmbeddingError):
        embed_mentions(["z"], LookupEmbeddingBackend({"z": [0.0, 0.0]}))


def test_empty_input_rejected():
    with pytest.raises(InvalidArgumentError):
        embed_mentions([], LookupEmbeddingBackend({"a": [1.0]}))


def test_batching():
    backend = LookupEmbeddingBackend({}, dim=8)
    surfaces = [f"s{i}" for i in range(10)]
    embed_mentions(surfaces, backend, batch_size=3)
    assert backend.calls == 4


def test_backend_failure_lists_surfaces():
    class Down:
        model_id, dim = "down", 2

        def embed(self, texts):
            raise ConnectionError("nope")

    with pytest.raises(EmbeddingError) as info:
        embed_mentions(["a", "b"], Down(), backoff=0)
    assert info.value.failed == ["a", "b"]


def test_cache_round_trip_bit_identical(tmp_path):
    path = tmp_path / "vectors.cache"
    backend = LookupEmbeddingBackend({}, dim=16)
    first = embed_mentions(["alpha", "beta"], backend, VectorCache(path, backend.model_id))
    backend2 = LookupEmbeddingBackend({}, dim=16)
    second = embed_mentions(["beta", "alpha"], backend2, VectorCache(path, backend2.model_id))
    assert backend2.calls == 0
    assert first[0].values.tobytes() == second[1].values.tobytes()
    assert first[1].values.tobytes() == second[0].values.tobytes()


def test_cache_file_layout(tmp_path):
    path = tmp_path / "vectors.cache"
    cache = VectorCache(path, "m1")
    cache.put_many([("ab", EmbeddingVector([1.0, 0.0]))])
    data = path.read_bytes()
    expected = (
        (2).to_bytes(4, "little") + b"m1" + (2).to_bytes(4, "little")
        + (2).to_bytes(4, "little") + b"ab" + np.array([1.0, 0.0], dtype="<f4").tobytes()
    )
    assert data == expected


def test_cache_for_other_model_discarded(tmp_path):
    path = tmp_path / "vectors.cache"
    VectorCache(path, "m1").put_many([("a", EmbeddingVector([1.0]))])
    assert "a" not in VectorCache(path, "m2")


def test_unit_norm_invariant():
    rng = np.random.default_rng(0)
    table = {f"w{i}": (rng.standard_normal(32) * rng.uniform(0.01, 100)).tolist() for i in range(50)}
    for v in embed_mentions(sorted(table), LookupEmbeddingBackend(table)):
        assert abs(np.linalg.norm(v.values.astype(np.float64)) - 1.0) <= 1e-6


class TestCosine:
    def test_identity(self):
        v = EmbeddingVector.from_raw([0.3, -0.2, 0.9])
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-7)

    def test_orthogonal(self):
        assert cosine_similarity(EmbeddingVector([1, 0]), EmbeddingVector([0, 1])) == 0.0

    def test_hand_dot(self):
        got = cosine_similarity(EmbeddingVector.from_raw([3, 4]), EmbeddingVector([1, 0]))
        assert got == pytest.approx(0.6, abs=1e-7)

    def test_dim_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            cosine_similarity(EmbeddingVector([1, 0]), EmbeddingVector([1, 0, 0]))

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3),
           st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3))
    def test_symmetric_and_bounded(self, a, b):
        assume(np.linalg.norm(a) > 1e-6 and np.linalg.norm(b) > 1e-6)
        u, v = EmbeddingVector.from_raw(a), EmbeddingVector.from_raw(b)
        s = cosine_similarity(u, v)
        assert s == cosine_similarity(v, u)
        assert -1.0 <= s <= 1.0


def test_http_backend_wire_format(stub):
    def handler(method, path, query, body):
        texts = json.loads(body)["input"]
        data = [{"index": i, "embedding": [float(len(t)), 1.0]} for i, t in enumerate(texts)]
        return 200, "application/json", json.dumps({"data": list(reversed(data))})
    stub.handler = handler
    backend = HttpEmbeddingBackend(stub.url + "/v1/embeddings", "e5-large", prefix="query: ")
    raw = backend.embed(["ab", "abcd"])
    assert raw == [[9.0, 1.0], [11.0, 1.0]]
    body = json.loads(stub.requests[0]["body"])
    assert body == {"model": "e5-large", "input": ["query: ab", "query: abcd"]}
    assert backend.dim == 2


def test_http_backend_unreachable():
    backend = HttpEmbeddingBackend("http://127.0.0.1:9/embeddings", "m")
    with pytest.raises(EmbeddingError):
        embed_mentions(["a"], backend, retries=1, backoff=0)
