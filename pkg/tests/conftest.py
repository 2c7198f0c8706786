import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from odin_kg.store import from_edges

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def random_graph(rng, n, m, relations=("r0", "r1", "r2"), stamps=True):
    edges = []
    for _ in range(m):
        s, o = rng.integers(n, size=2)
        r = relations[rng.integers(len(relations))]
        t = int(rng.integers(0, 1_000_000)) if stamps else None
        edges.append((f"v{s:03d}", r, f"v{o:03d}", t, (f"d{len(edges)}",)))
    return from_edges(edges, [f"v{i:03d}" for i in range(n)])


@pytest.fixture
def star():
    return from_edges([("c", "r", f"l{i}") for i in range(5)])


@pytest.fixture
def two_cycle():
    return from_edges([("a", "r", "b"), ("b", "r", "a")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
