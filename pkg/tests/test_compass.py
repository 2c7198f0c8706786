import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from odin_kg.community import AffinityTable, BridgeEntry, CommunityMetadata, build_metadata
from odin_kg.compass import (
    SIGNALS, CompassConfig, CompassScorer, SignalBreakdown, VetoError, affinity_score,
    bridge_score, compass_score, explain, narrate, prior_score, temporal_score,
)
from odin_kg.npll import NpllModel, Rule
from odin_kg.paths import Path
from odin_kg.ppr import ppr_local_push
from odin_kg.store import GraphError, from_edges
from tests.conftest import random_graph

LAM = 1e-6


def chain(stamps):
    edges = [(f"n{i}", "r", f"n{i + 1}", t) for i, t in enumerate(stamps)]
    return from_edges(edges)


def test_temporal_examples():
    cfg = CompassConfig(lambda_decay=LAM, t_now=10_000_000)
    g = chain([10_000_000])
    assert temporal_score(g, Path.from_triples(g, [0]), cfg) == 1.0
    g = chain([10_000_000 - int(1 / LAM)])
    assert abs(temporal_score(g, Path.from_triples(g, [0]), cfg) - math.exp(-1)) < 1e-12
    g = chain([10_000_000, 10_000_000 - int(1 / LAM)])
    assert abs(temporal_score(g, Path.from_triples(g, [0, 1]), cfg) - (1 + math.exp(-1)) / 2) < 1e-12
    assert round((1 + math.exp(-1)) / 2, 6) == 0.683940


def test_temporal_missing_and_future():
    g = from_edges([("a", "r", "b"), ("b", "r", "c", 500)])
    cfg = CompassConfig(lambda_decay=LAM, t_now=100)
    assert temporal_score(g, Path.from_triples(g, [0, 1]), cfg) == 1.0


def test_t_now_defaults_to_snapshot_max():
    g = chain([100, 200])
    assert CompassConfig().now(g) == 200
    assert CompassConfig(t_now=5).now(g) == 5


def test_prior_examples():
    g = from_edges([("a", "r1", "b"), ("b", "r1", "c"), ("c", "r1", "d"), ("c", "r2", "a")])
    r2 = Path.from_edges(g, [("c", "r2", "a")])
    assert prior_score(g, r2) == 0.25
    two = Path.from_edges(g, [("b", "r1", "c"), ("c", "r2", "a")])
    assert prior_score(g, two) == 0.5
    single = from_edges([("a", "r", "b"), ("b", "r", "c")])
    assert prior_score(single, Path.from_triples(single, [0, 1])) == 1.0
    inv = CompassConfig(prior_mode="inverse_frequency")
    # 1 - 0.25 + 1/2 clamps to 1; 1 - 0.75 + 0.5 = 0.75
    assert prior_score(g, r2, inv) == 1.0
    assert prior_score(g, Path.from_edges(g, [("a", "r1", "b")]), inv) == 0.75


def meta_for(assignment, strengths=(), affinity=None):
    bridges = tuple(BridgeEntry(e, tuple(range(s)), s) for e, s in strengths)
    return CommunityMetadata(assignment, bridges, AffinityTable(affinity or {}))


def test_bridge_examples():
    g = from_edges([("a", "r", "b"), ("b", "r", "c")])
    p1 = Path.from_edges(g, [("a", "r", "b")])
    assert bridge_score(p1, None) == 1.0
    assert bridge_score(p1, meta_for({"a": 0, "b": 0, "c": 0})) == 1.0
    meta = meta_for({"a": 0, "b": 1, "c": 2}, [("b", 3)])
    assert abs(bridge_score(p1, meta) - 1.160420) < 1e-6
    assert abs((1 + (1 + 0.5 * math.log(4))) / 2 - 1.346574) < 1e-6


def test_affinity_examples():
    g = from_edges([("a", "r", "b"), ("b", "r", "c")])
    p = Path.from_triples(g, [0, 1])
    assert affinity_score(p, meta_for({"a": 0, "b": 0, "c": 0})) == 1.0
    one = meta_for({"a": 0, "b": 1, "c": 1}, affinity={(0, 1): 1.0})
    assert affinity_score(p, one) == 1.5
    two = meta_for({"a": 0, "b": 1, "c": 2}, affinity={(0, 1): 1.0, (1, 2): 0.5})
    assert affinity_score(p, two) == 1.875
    missing = meta_for({"a": 0, "b": 1, "c": 2}, affinity={(0, 1): 1.0})
    assert affinity_score(p, missing) == 1.5
    assert affinity_score(p, None) == 1.0


def test_breakdown_examples():
    assert SignalBreakdown(1, 1, 1, 1, 1, 1).compass == 1
    assert SignalBreakdown(0.5, 0.5, 1, 1, 1, 1).compass == 0.25
    assert SignalBreakdown(0.0, 0.9, 2, 2, 1, 1).compass == 0.0
    assert explain(SignalBreakdown(1, 1, 1, 1, 1, 1)) == {s: 0.0 for s in SIGNALS}
    phi = explain(SignalBreakdown(math.exp(-1), 1, 1, 1, 1, 1))
    assert phi["edge"] == -1.0 and all(phi[s] == 0 for s in SIGNALS[1:])
    phi = explain(SignalBreakdown(0.5, 0.5, 1.5, 1, 1, 1))
    assert phi["edge"] == phi["struct"] == -math.log(2)
    assert phi["bridge"] == math.log(1.5)
    assert abs(sum(phi.values()) - math.log(0.375)) < 1e-12


def test_veto_error_names_signals():
    b = SignalBreakdown(0.0, 1, 1, 1, 1, 0.0)
    with pytest.raises(VetoError, match="no finite log decomposition") as exc:
        explain(b)
    assert exc.value.signals == ("edge", "temp")
    doc = b.to_json()
    assert doc["shapley"] is None and doc["veto"] == ["edge", "temp"]
    assert "vetoed" in narrate(b)


def test_narrate_mentions_drivers():
    text = narrate(SignalBreakdown(0.5, 0.9, 1.3, 1, 1, 1), rank=1)
    assert text.startswith("Path #1")
    assert "bridge" in text and "edge plausibility" in text
    assert "neutral" in narrate(SignalBreakdown(1, 1, 1, 1, 1, 1))


def test_compass_score_fallbacks():
    g = from_edges([("a", "r", "b", 5)])
    p = Path.from_triples(g, [0])
    b = compass_score(g, p, None, ppr_local_push(g, ["a"]))
    assert b.factors == {s: 1.0 for s in SIGNALS}
    assert b.compass == 1.0


def test_compass_score_rejects_bad_triple():
    g = from_edges([("a", "r", "b")])
    with pytest.raises(GraphError):
        compass_score(g, Path(("a", "b"), (7,)), None, ppr_local_push(g, ["a"]))


def test_config_validation():
    for bad in (dict(lambda_decay=-1), dict(rho=0), dict(prior_mode="x"),
                dict(struct_normalizer_mode="y"), dict(struct_normalizer_value=0)):
        with pytest.raises(ValueError):
            CompassConfig(**bad)


def test_unknown_disabled_signal():
    g = from_edges([("a", "r", "b")])
    with pytest.raises(ValueError):
        CompassScorer(g, disabled=frozenset({"nope"}))


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

factor = st.floats(1e-6, 1.0)
boost = st.floats(1.0, 5.0)
breakdowns = st.builds(SignalBreakdown, factor, factor, boost, boost, factor, factor)


@given(breakdowns)
def test_shapley_completeness(b):
    phi = explain(b)
    assert abs(sum(phi.values()) - math.log(b.compass)) <= 1e-9
    assert (phi["bridge"] >= 0) and (phi["affinity"] >= 0)


@given(breakdowns, st.sampled_from(SIGNALS))
def test_veto_any_factor(b, name):
    vals = b.factors
    vals[name] = 0.0
    vb = SignalBreakdown(*(vals[s] for s in SIGNALS))
    assert vb.compass == 0.0
    assert vb.shapley is None


def scored_setup(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 25, 90)
    rules = [Rule(("r0", "r1"), "r2", 10, 0.5, 1.5), Rule(("r1", "r1"), "r0", 10, 0.3, -0.7)]
    model = NpllModel(rules=rules, relation_bias={"r0": 0.2, "r1": -0.1, "r2": 0.0}, trained=True)
    meta = build_metadata(g)
    seed_e = g.entities[0]
    return g, model, ppr_local_push(g, [seed_e]), meta


@given(st.integers(0, 500), st.data())
def test_batch_equals_scalar_signals(seed, data):
    g, model, ppr, meta = scored_setup(seed)
    cfg = CompassConfig(lambda_decay=1e-5)
    scorer = CompassScorer(g, ppr, model, meta, cfg)
    u = data.draw(st.sampled_from([e for e in g.entities if g.out_degree[g.index_of(e)] > 0]))
    path = Path.empty(u)
    for _ in range(data.draw(st.integers(1, 3))):
        lo, hi = g.indptr[g.index_of(path.end)], g.indptr[g.index_of(path.end) + 1]
        if lo == hi:
            break
        path = path.extend(g, data.draw(st.integers(int(lo), int(hi) - 1)))
    assume(path.hops > 0)
    b = compass_score(g, path, model, ppr, meta, cfg, struct_normalizer=0.05)
    assert b.s_temp == pytest.approx(temporal_score(g, path, cfg), rel=1e-12)
    assert b.s_prior == pytest.approx(prior_score(g, path, cfg), rel=1e-12)
    assert b.s_bridge == pytest.approx(bridge_score(path, meta, cfg), rel=1e-12)
    assert b.s_affinity == pytest.approx(affinity_score(path, meta, cfg), rel=1e-12)
    from odin_kg.npll import edge_confidence
    from odin_kg.ppr import struct_score

    assert b.s_edge == pytest.approx(edge_confidence(model, g, path), rel=1e-12)
    assert b.s_struct == pytest.approx(struct_score(ppr, path, 0.05), rel=1e-12)
    assert b.compass == pytest.approx(math.prod(b.factors.values()), rel=1e-12)


@given(st.integers(0, 500), st.floats(0.5, 20.0))
def test_rank_invariant_under_normalizer_scaling(seed, scale):
    g, model, ppr, meta = scored_setup(seed)
    scorer = CompassScorer(g, ppr, model, meta, CompassConfig(struct_normalizer_mode="fixed", struct_normalizer_value=1.0))
    ents = np.stack([g.subj, g.obj], axis=1)
    tris = np.arange(g.total_triples)[:, None]
    base = scorer.score(ents, tris, 1.0).compass
    scaled = scorer.score(ents, tris, scale).compass
    # pi <= 1 and scale >= 0.5 can still clamp; restrict to unclamped rows
    ok = scorer.raw_struct(ents) <= min(1.0, scale)
    np.testing.assert_allclose(scaled[ok], base[ok] / scale, rtol=1e-12)
    order = np.argsort(-base[ok], kind="stable")
    assert np.all(np.diff(scaled[ok][order]) <= 1e-15)


@given(st.lists(st.integers(0, 10**7), min_size=1, max_size=4), st.integers(1, 10**6))
def test_temporal_monotone_in_age(stamps, shift):
    g = chain([s + shift for s in stamps])
    h = chain(stamps)
    cfg = CompassConfig(lambda_decay=LAM, t_now=2 * 10**7)
    pg = Path.from_triples(g, list(range(len(stamps))))
    ph = Path.from_triples(h, list(range(len(stamps))))
    assert temporal_score(h, ph, cfg) < temporal_score(g, pg, cfg)


@given(st.integers(2, 20), st.integers(1, 5))
def test_bridge_monotone_in_strength(s, extra):
    g = from_edges([("a", "r", "b"), ("b", "r", "c")])
    p = Path.from_triples(g, [0, 1])
    lo = bridge_score(p, meta_for({"a": 0, "b": 0, "c": 0}, [("b", s)]))
    hi = bridge_score(p, meta_for({"a": 0, "b": 0, "c": 0}, [("b", s + extra)]))
    assert hi > lo > 1.0


@given(st.floats(0.01, 1.0))
def test_affinity_cross_edge_boosts(a):
    g = from_edges([("a", "r", "b"), ("b", "r", "c")])
    short = Path.from_triples(g, [0])
    long = Path.from_triples(g, [0, 1])
    meta = meta_for({"a": 0, "b": 0, "c": 1}, affinity={(0, 1): a})
    assert affinity_score(long, meta) == affinity_score(short, meta) * (1 + 0.5 * a)
    assert affinity_score(long, meta) > 1.0


@given(st.integers(0, 300), st.sampled_from(SIGNALS))
def test_disabling_is_neutral_for_other_signals(seed, name):
    g, model, ppr, meta = scored_setup(seed)
    scorer = CompassScorer(g, ppr, model, meta)
    ents = np.stack([g.subj, g.obj], axis=1)
    tris = np.arange(g.total_triples)[:, None]
    full = scorer.score(ents, tris)
    off = scorer.with_disabled({name}).score(ents, tris)
    assert np.all(off.factors[name] == 1.0)
    for other in SIGNALS:
        if other != name:
            np.testing.assert_array_equal(off.factors[other], full.factors[other])
