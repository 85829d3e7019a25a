import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litscape.clustering import SynonymCluster
from litscape.errors import DataIntegrityError
from litscape.extraction import Mention, normalize
from litscape.graph import (
    CooccurrenceGraph,
    View,
    build_cooccurrence,
    export_graph,
    load_graph,
    top_frequencies,
)
from litscape.model import Category, SectionKind

O, M, D = Category.OBJECTIVE, Category.METHOD, Category.DATASET


def _m(pid, cat, surface):
    return Mention(pid, cat, surface, SectionKind.OTHER, normalize(surface))


def _cl(cid, cat, surface, freq=1):
    return SynonymCluster(cid, cat, [normalize(surface)], surface, freq)


@pytest.fixture
def xyz():
    clusters = [_cl("O000", O, "X"), _cl("M000", M, "Y"), _cl("D000", D, "Z")]
    mentions = [_m("p1", O, "X"), _m("p1", M, "Y"), _m("p1", D, "Z")]
    return clusters, mentions


def test_single_paper_three_elements(xyz):
    g = build_cooccurrence(*xyz)
    assert [n.label for n in g.nodes] == ["X", "Y", "Z"]
    assert {(e.a, e.b, e.weight) for e in g.edges} == {
        ("O000", "M000", 1), ("O000", "D000", 1), ("M000", "D000", 1)}


def test_objective_dataset_view(xyz):
    g = build_cooccurrence(*xyz, view=View.OBJECTIVE_DATASET)
    assert [n.label for n in g.nodes] == ["X", "Z"]
    assert [(e.a, e.b, e.weight) for e in g.edges] == [("O000", "D000", 1)]


def test_weight_counts_papers(xyz):
    clusters, mentions = xyz
    mentions = mentions + [_m("p2", O, "X"), _m("p2", D, "Z")]
    g = build_cooccurrence(clusters, mentions)
    w = {(e.a, e.b): e.weight for e in g.edges}
    assert w[("O000", "D000")] == 2
    assert w[("O000", "M000")] == 1


def test_same_category_not_linked():
    clusters = [_cl("M000", M, "A"), _cl("M001", M, "B")]
    g = build_cooccurrence(clusters, [_m("p1", M, "A"), _m("p1", M, "B")])
    assert g.edges == []


def test_unmapped_mention_rejected(xyz):
    clusters, mentions = xyz
    with pytest.raises(DataIntegrityError):
        build_cooccurrence(clusters, mentions + [_m("p1", O, "unknown")])


def test_top_frequencies():
    clusters = [_cl("D000", D, "SP500", 12), _cl("D001", D, "Yahoo", 5), _cl("D002", D, "Aaa", 5),
                _cl("M000", M, "SVM", 40)]
    assert top_frequencies(clusters, D, 1) == [("SP500", 12)]
    assert top_frequencies(clusters, D, 3) == [("SP500", 12), ("Aaa", 5), ("Yahoo", 5)]
    assert top_frequencies(clusters, O, 3) == []
    with pytest.raises(ValueError):
        top_frequencies(clusters, D, 0)


def test_empty_dot():
    assert export_graph(CooccurrenceGraph(), "dot") == b"graph G {\n}\n"


def test_json_round_trip(xyz):
    g = build_cooccurrence(*xyz)
    assert load_graph(export_graph(g, "json")) == g


@pytest.mark.parametrize("fmt", ["dot", "graphml", "json"])
def test_export_byte_stable(xyz, fmt):
    clusters, mentions = xyz
    a = export_graph(build_cooccurrence(clusters, mentions), fmt)
    b = export_graph(build_cooccurrence(list(reversed(clusters)), list(reversed(mentions))), fmt)
    assert a == b


def test_graphml_escapes_labels():
    clusters = [_cl("O000", O, 'a <b> & "c"'), _cl("D000", D, "S&P 500")]
    g = build_cooccurrence(clusters, [_m("p", O, 'a <b> & "c"'), _m("p", D, "S&P 500")])
    text = export_graph(g, "graphml").decode()
    assert "S&amp;P 500" in text and "&lt;b&gt;" in text
    ET.fromstring(text)


_cats = st.sampled_from([O, M, D])
_corpus = st.lists(st.tuples(st.integers(0, 5), _cats, st.integers(0, 3)), min_size=1, max_size=40)


def _from_triples(triples):
    mentions = [_m(f"p{p}", c, f"{c.value} {i}") for p, c, i in triples]
    seen = {}
    for m in mentions:
        seen.setdefault((m.category, m.normalized), m)
    clusters = [SynonymCluster(f"{c.value[0]}{i:03d}", c, [s], s, 1)
                for i, ((c, s), _) in enumerate(sorted(seen.items(), key=lambda kv: (kv[0][0].order, kv[0][1])))]
    return clusters, mentions


@settings(max_examples=60, deadline=None)
@given(_corpus)
def test_weight_bounded_by_papers(triples):
    clusters, mentions = _from_triples(triples)
    g = build_cooccurrence(clusters, mentions)
    papers = len({m.paper_id for m in mentions})
    cat = {c.id: c.category for c in clusters}
    for e in g.edges:
        assert 1 <= e.weight <= papers
        assert cat[e.a] != cat[e.b]


@settings(max_examples=60, deadline=None)
@given(_corpus)
def test_objective_dataset_view_is_restriction(triples):
    clusters, mentions = _from_triples(triples)
    full = build_cooccurrence(clusters, mentions, View.THREE_ELEMENT)
    od = build_cooccurrence(clusters, mentions, View.OBJECTIVE_DATASET)
    assert full.restrict({O, D}, View.OBJECTIVE_DATASET) == od
