"""Seeded block-model knowledge graphs with planted structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .store import GraphSnapshot, Triple


@dataclass(frozen=True)
class SyntheticSpec:
    num_entities: int = 100
    num_communities: int = 2
    p_in: float = 0.1
    p_out: float = 0.005
    num_relations: int = 4
    zipf_exponent: float = 1.2
    planted_rule: Optional[tuple[str, str, str]] = None
    rule_prob: float = 1.0
    holdout: float = 0.0
    planted_bridges: int = 0
    bridge_reach: int = 3
    bridge_links: int = 2
    timestamp_range: Optional[tuple[int, int]] = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.p_in > self.p_out:
            raise ValueError("p_in must exceed p_out")
        if self.num_entities < 2 or self.num_communities < 1 or self.num_relations < 1:
            raise ValueError("need >= 2 entities, >= 1 community and >= 1 relation")
        if self.planted_bridges and self.bridge_reach > self.num_communities:
            raise ValueError("bridge_reach cannot exceed num_communities")


@dataclass
class GroundTruth:
    communities: dict[str, int]
    bridges: list[str] = field(default_factory=list)
    closures: list[tuple[str, str, str]] = field(default_factory=list)
    heldout: list[tuple[str, str, str]] = field(default_factory=list)


def entity_name(i: int, n: int) -> str:
    return f"e{i:0{len(str(n - 1))}d}"


def relation_name(k: int, n: int) -> str:
    return f"r{k:0{len(str(n - 1))}d}"


def generate(spec: SyntheticSpec) -> tuple[GraphSnapshot, GroundTruth]:
    rng = np.random.default_rng(spec.rng_seed)
    n, c = spec.num_entities, spec.num_communities
    labels = np.arange(n) * c // n
    names = [entity_name(i, n) for i in range(n)]
    rels = [relation_name(k, spec.num_relations) for k in range(spec.num_relations)]
    zipf = 1.0 / np.arange(1, spec.num_relations + 1) ** spec.zipf_exponent
    zipf /= zipf.sum()

    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    np.fill_diagonal(prob, 0.0)
    src, dst = np.nonzero(rng.random((n, n)) < prob)
    edges = set(zip(src.tolist(), rng.choice(spec.num_relations, size=len(src), p=zipf).tolist(), dst.tolist()))

    bridges = []
    if spec.planted_bridges:
        for b in sorted(rng.choice(n, size=spec.planted_bridges, replace=False).tolist()):
            others = [k for k in range(c) if k != labels[b]]
            reach = rng.choice(others, size=spec.bridge_reach - 1, replace=False)
            for k in sorted(reach.tolist()):
                members = np.flatnonzero(labels == k)
                for v in rng.choice(members, size=min(spec.bridge_links, len(members)), replace=False).tolist():
                    r = int(rng.choice(spec.num_relations, p=zipf))
                    if rng.random() < 0.5:
                        edges.add((b, r, v))
                    else:
                        edges.add((v, r, b))
            bridges.append(names[b])

    closures, heldout = [], []
    if spec.planted_rule is not None:
        r1, r2, r3 = (rels.index(x) if x in rels else _bad_rel(x) for x in spec.planted_rule)
        by_src: dict[int, list[int]] = {}
        for s, r, o in sorted(edges):
            if r == r2:
                by_src.setdefault(s, []).append(o)
        heads = set()
        for s, r, o in sorted(edges):
            if r != r1:
                continue
            for z in by_src.get(o, []):
                if z != s:
                    heads.add((s, r3, z))
        for tri in sorted(heads):
            if rng.random() >= spec.rule_prob:
                continue
            if rng.random() < spec.holdout:
                heldout.append(tri)
                edges.discard(tri)
            else:
                closures.append(tri)
                edges.add(tri)

    edges = sorted(edges)
    if spec.timestamp_range is not None:
        lo, hi = spec.timestamp_range
        stamps = rng.integers(lo, hi + 1, size=len(edges)).tolist()
    else:
        stamps = [None] * len(edges)
    triples = [
        Triple(names[s], rels[r], names[o], t, (f"doc-{i}",))
        for i, ((s, r, o), t) in enumerate(zip(edges, stamps))
    ]
    g = GraphSnapshot.from_triples(triples, names)

    def named(tris):
        return [(names[s], rels[r], names[o]) for s, r, o in tris]

    truth = GroundTruth(
        {names[i]: int(labels[i]) for i in range(n)}, bridges, named(closures), named(heldout)
    )
    return g, truth


def _bad_rel(x):
    raise ValueError(f"planted rule uses unknown relation {x!r}")


def regular_tree(branching: int = 50, depth: int = 3, relation: str = "r") -> GraphSnapshot:
    """Complete out-tree: every internal node has exactly ``branching`` children."""
    triples = []
    level = ["n"]
    for _ in range(depth):
        nxt = []
        for parent in level:
            for i in range(branching):
                child = f"{parent}.{i:03d}"
                triples.append(Triple(parent, relation, child))
                nxt.append(child)
        level = nxt
    return GraphSnapshot.from_triples(triples)


def random_digraph(
    n: int, mean_out_degree: float, rng_seed: int, num_relations: int = 3,
    timestamp_range: Optional[tuple[int, int]] = (0, 10_000_000),
) -> GraphSnapshot:
    """Erdos-Renyi style directed multigraph with random relations and stamps."""
    spec = SyntheticSpec(
        num_entities=n, num_communities=1, p_in=min(1.0, mean_out_degree / (n - 1)), p_out=0.0,
        num_relations=num_relations, zipf_exponent=0.5, timestamp_range=timestamp_range,
        rng_seed=rng_seed,
    )
    return generate(spec)[0]
