import numpy as np
import pytest
from hypothesis import given, strategies as st

from odin_kg.paths import Path
from odin_kg.ppr import PprConfig, PprError, ppr_exact, ppr_local_push, struct_score
from odin_kg.store import from_edges
from tests.conftest import random_graph


def test_isolated_seed():
    g = from_edges([("a", "r", "b")], ["z"])
    for pv in (ppr_local_push(g, ["z"]), ppr_exact(g, ["z"])):
        assert pv.scores == {"z": 1.0}


def test_two_cycle_closed_form(two_cycle):
    for pv in (ppr_local_push(two_cycle, ["a"], PprConfig(alpha=0.5, epsilon=1e-9)),
               ppr_exact(two_cycle, ["a"], alpha=0.5)):
        assert abs(pv["a"] - 2 / 3) < 1e-6
        assert abs(pv["b"] - 1 / 3) < 1e-6


def test_star_center_dominates(star):
    pv = ppr_local_push(star, ["c"])
    assert all(pv["c"] > pv[f"l{i}"] for i in range(5))
    ex = ppr_exact(star, ["c"])
    assert all(ex["c"] > ex[f"l{i}"] for i in range(5))


def test_errors(star):
    with pytest.raises(PprError, match="empty"):
        ppr_local_push(star, [])
    with pytest.raises(PprError, match="not in graph"):
        ppr_local_push(star, ["nope"])
    with pytest.raises(PprError):
        PprConfig(alpha=1.0)
    with pytest.raises(PprError):
        PprConfig(epsilon=0)


def test_exact_guard(monkeypatch, star):
    import odin_kg.ppr as mod

    monkeypatch.setattr(mod, "EXACT_MAX_ENTITIES", 3)
    with pytest.raises(PprError, match="limited"):
        ppr_exact(star, ["c"])


def test_absent_entity_scores_zero(star):
    pv = ppr_local_push(star, ["l0"])
    assert pv["c"] == 0.0
    assert pv["not-an-entity"] == 0.0


def test_jsonl(two_cycle):
    lines = ppr_local_push(two_cycle, ["a"]).to_jsonl().splitlines()
    assert [l.split(",")[0] for l in lines] == ['{"e": "a"', '{"e": "b"']


def test_struct_score_examples():
    g = from_edges([("s", "r", "x"), ("x", "r", "y")])
    pv = ppr_exact(g, ["s"])
    pv.values[:] = [0.0, 0.2, 0.4]  # s, x, y
    p2 = Path.from_edges(g, [("s", "r", "x"), ("x", "r", "y")])
    assert struct_score(pv, p2, 0.4) == pytest.approx(0.75, abs=1e-15)
    p1 = Path.from_edges(g, [("x", "r", "y")])
    assert struct_score(pv, p1, 0.4) == 1.0
    pv.values[:] = 0.0
    assert struct_score(pv, p2, 1.0) == 0.0
    with pytest.raises(PprError):
        struct_score(pv, p2, 0.0)


graphs = st.builds(
    lambda seed, n, m: random_graph(np.random.default_rng(seed), n, m),
    st.integers(0, 10_000), st.integers(2, 60), st.integers(1, 200),
)


@given(graphs, st.sampled_from([1e-2, 1e-3, 1e-4]), st.sampled_from([0.15, 0.3]), st.booleans())
def test_push_within_bound_of_exact(g, eps, alpha, sym):
    seeds = [g.entities[0], g.entities[-1]]
    approx = ppr_local_push(g, seeds, PprConfig(alpha, eps, sym)).values
    exact = ppr_exact(g, seeds, alpha, symmetrize=sym).values
    deg = np.diff(g.indptr) if not sym else np.bincount(np.r_[g.subj, g.obj], minlength=g.num_entities)
    assert np.all(np.abs(approx - exact) <= eps * np.maximum(deg, 1) + 1e-12)
    assert np.all(approx >= 0) and np.all(approx <= 1)
    assert approx.sum() <= 1 + 1e-12
    assert abs(exact.sum() - 1) < 1e-9


@given(graphs)
def test_push_is_deterministic(g):
    a = ppr_local_push(g, [g.entities[0]]).values
    b = ppr_local_push(g, [g.entities[0]]).values
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("n", [3, 6, 11])
def test_seed_dominates_on_directed_cycle(n):
    g = from_edges([(f"v{i:02d}", "r", f"v{(i + 1) % n:02d}") for i in range(n)])
    pv = ppr_local_push(g, ["v00"], PprConfig(epsilon=1e-8))
    assert int(np.argmax(pv.values)) == 0
