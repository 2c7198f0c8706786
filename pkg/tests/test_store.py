import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from odin_kg.store import (
    GraphError, GraphSnapshot, IngestError, Triple, from_edges, ingest, load, neighbors,
    relation_frequency,
)


def rec(s, r, o, **kw):
    return json.dumps({"s": s, "r": r, "o": o, **kw})


def test_single_record():
    g = ingest([rec("a", "likes", "b")])
    assert g.entities == ("a", "b")
    assert g.total_triples == 1
    assert g.relation_counts == {"likes": 1}


def test_duplicates_collapse():
    g = ingest([rec("a", "r", "b", t=10, prov=["x"]), rec("a", "r", "b", t=20, prov=["y", "x"])])
    assert g.total_triples == 1
    assert g.triples[0].timestamp == 20
    assert g.triples[0].provenance == ("x", "y")


def test_cycle_stats():
    g = ingest([rec("a", "r", "b"), rec("b", "r", "c"), rec("c", "r", "a")])
    assert g.avg_out_degree == 1.0
    assert g.relation_counts == {"r": 3}


def test_missing_timestamp_is_absent():
    g = ingest([rec("a", "r", "b")])
    assert g.triples[0].timestamp is None
    assert g.max_timestamp is None
    assert np.isnan(g.timestamps[0])


@pytest.mark.parametrize(
    "lines, line",
    [
        (["{bad json"], 1),
        ([rec("a", "r", "b"), json.dumps({"s": "a", "o": "b"})], 2),
        ([rec("a", "", "b")], 1),
        ([rec("a", "r", "b", t=-1)], 1),
        ([rec("a", "r", "b", t=1.5)], 1),
        ([rec("a", "r", "b", prov="doc")], 1),
        (["[1, 2]"], 1),
    ],
)
def test_malformed_names_line(lines, line):
    with pytest.raises(IngestError) as exc:
        ingest(lines)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_empty_graph():
    with pytest.raises(IngestError, match="empty graph"):
        ingest(["", "  "])


def test_neighbors_canonical_order():
    g = from_edges([("n", "r2", "x"), ("n", "r1", "y"), ("y", "r1", "z")], ["iso"])
    assert [(r, o) for r, o, _ in neighbors(g, "n")] == [("r1", "y"), ("r2", "x")]
    assert neighbors(g, "iso") == []
    for r, o, t in neighbors(g, "n"):
        assert g.triples[t].key() == ("n", r, o)


def test_neighbors_hub():
    g = from_edges([("hub", "r", f"leaf{i:02d}") for i in range(50)])
    assert len(neighbors(g, "hub")) == 50


def test_unknown_entity():
    g = from_edges([("a", "r", "b")])
    with pytest.raises(GraphError, match="entity not found"):
        neighbors(g, "zzz")


def test_relation_frequency_examples():
    g = from_edges([("a", "r1", "b"), ("b", "r1", "c"), ("c", "r1", "a"), ("a", "r2", "c")])
    assert relation_frequency(g, "r1") == 0.75
    g2 = from_edges([("a", "r1", "b"), ("a", "r2", "b"), ("a", "r3", "b"), ("b", "r3", "a")])
    assert relation_frequency(g2, "r3") == 0.5
    assert relation_frequency(from_edges([("a", "r", "b")]), "r") == 1.0
    with pytest.raises(GraphError):
        relation_frequency(g, "nope")


def test_snapshot_is_read_only():
    g = from_edges([("a", "r", "b")])
    with pytest.raises(ValueError):
        g.subj[0] = 1
    with pytest.raises(Exception):
        g.entities = ()


def test_load_with_entity_file(tmp_path):
    (tmp_path / "t.jsonl").write_text(rec("a", "r", "b") + "\n")
    (tmp_path / "e.txt").write_text("a\nlonely\n")
    g = load(tmp_path / "t.jsonl", tmp_path / "e.txt")
    assert "lonely" in g.entity_index
    assert g.out_degree[g.index_of("lonely")] == 0


edge_lists = st.lists(
    st.tuples(
        st.sampled_from("abcdef"), st.sampled_from(["p", "q", "rr"]), st.sampled_from("abcdef"),
        st.one_of(st.none(), st.integers(0, 100)),
        st.lists(st.sampled_from(["d1", "d2", "d3"]), max_size=2),
    ),
    min_size=1, max_size=30,
)


@given(edge_lists, st.randoms(use_true_random=False))
def test_order_independence_and_round_trip(edges, rnd):
    g = from_edges(edges, ["iso"])
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    h = from_edges(shuffled, ["iso"])
    assert g.dumps() == h.dumps()
    back = ingest(g.dumps().splitlines())
    assert back.entities == g.entities
    assert back.triples == g.triples
    assert back.relation_counts == g.relation_counts
    assert back.avg_out_degree == g.avg_out_degree


@given(edge_lists)
def test_statistics_invariants(edges):
    g = from_edges(edges)
    assert sum(g.relation_counts.values()) == g.total_triples
    assert sum(Fraction(c, g.total_triples) for c in g.relation_counts.values()) == 1
    assert abs(sum(relation_frequency(g, r) for r in g.relations) - 1.0) <= 1e-12
    for e in g.entities:
        listed = sorted(t for _, _, t in neighbors(g, e))
        assert listed == [i for i, t in enumerate(g.triples) if t.subject == e]
    keys = [t.key() for t in g.triples]
    assert keys == sorted(set(keys))


def test_triple_record_round_trip():
    t = Triple("a", "r", "b", 5, ("x",))
    assert t.to_record() == {"s": "a", "r": "r", "o": "b", "t": 5, "prov": ["x"]}
    assert isinstance(GraphSnapshot.from_triples([t]), GraphSnapshot)
