"""Deterministic beam search over COMPASS-scored paths.

Ranking uses a total order: compass descending, then hop count, then the
entity sequence, then the triple sequence (which separates parallel edges).
Entity and triple indices follow sorted id order, so comparing indices is the
same as comparing ids.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .compass import CompassScorer, ScoredBatch, SignalBreakdown
from .paths import Path, PathError
from .store import GraphError, GraphSnapshot, Triple


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    seeds: tuple[str, ...]
    hops: int = 3
    beam_width: int = 64
    top_k: int = 50
    allow_revisit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(sorted(set(self.seeds))))
        if not self.seeds:
            raise SearchError("at least one seed is required")
        if self.hops < 1 or self.beam_width < 1 or self.top_k < 1:
            raise SearchError("hops, beam_width and top_k must be >= 1")


@dataclass(frozen=True)
class ScoredPath:
    path: Path
    breakdown: SignalBreakdown
    hop: int
    struct_normalizer: float
    sort_key: tuple = field(repr=False, compare=False)

    @property
    def compass(self) -> float:
        return self.breakdown.compass

    def to_json(self, g: GraphSnapshot, rank: int) -> dict:
        edges = []
        for t in self.path.triples:
            tr = g.triples[t]
            edges.append({
                "s": tr.subject, "r": tr.relation, "o": tr.object,
                "t": tr.timestamp, "prov": list(tr.provenance),
            })
        out = {"rank": rank, "hop": self.hop, "entities": list(self.path.entities), "edges": edges}
        out.update(self.breakdown.to_json())
        out["struct_normalizer"] = self.struct_normalizer
        return out


@dataclass
class SearchReport:
    results: list[ScoredPath]
    score_evaluations: int
    paths_explored: int
    elapsed: float
    candidates_per_hop: list[int] = field(default_factory=list)

    def to_json(self, g: GraphSnapshot, include_timing: bool = False) -> dict:
        out = {
            "results": [sp.to_json(g, i + 1) for i, sp in enumerate(self.results)],
            "score_evaluations": self.score_evaluations,
            "paths_explored": self.paths_explored,
            "candidates_per_hop": list(self.candidates_per_hop),
        }
        if include_timing:
            out["elapsed_seconds"] = self.elapsed
        return out


def rank_order(compass: np.ndarray, ents: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Indices of same-length candidates in ranking order."""
    keys = [tris[:, j] for j in range(tris.shape[1] - 1, -1, -1)]
    keys += [ents[:, j] for j in range(ents.shape[1] - 1, -1, -1)]
    keys.append(-compass)
    return np.lexsort(keys)


def batch_to_scored(
    g: GraphSnapshot, batch: ScoredBatch, ents: np.ndarray, tris: np.ndarray, rows: Iterable[int]
) -> list[ScoredPath]:
    hop = tris.shape[1]
    out = []
    for i in rows:
        b = batch.breakdown(i)
        path = Path(tuple(g.entities[e] for e in ents[i]), tuple(int(t) for t in tris[i]))
        key = (-b.compass, hop, tuple(int(e) for e in ents[i]), path.triples)
        out.append(ScoredPath(path, b, hop, batch.struct_normalizer, key))
    return out


def top_k(paths: Iterable[ScoredPath], k: int) -> list[ScoredPath]:
    return sorted(paths, key=lambda sp: sp.sort_key)[:k]


def seed_indices(g: GraphSnapshot, seeds: Iterable[str]) -> np.ndarray:
    try:
        return np.array(sorted(g.index_of(s) for s in set(seeds)), np.int64)
    except GraphError as exc:
        raise SearchError(f"seed not in graph: {exc}") from None


def discover(g: GraphSnapshot, cfg: SearchConfig, scorer: CompassScorer) -> SearchReport:
    """Beam search from the seeds; returns the best ``top_k`` paths found at any depth."""
    start = time.perf_counter()
    ents = seed_indices(g, cfg.seeds)[:, None]
    tris = np.empty((ents.shape[0], 0), np.int64)
    kept: list[ScoredPath] = []
    evaluations = 0
    per_hop = []

    for _ in range(cfg.hops):
        if ents.shape[0] == 0:
            break
        parent, triple = kernels.expand_frontier(g.indptr, g.obj, ents, cfg.allow_revisit)
        if triple.size == 0:
            break
        cand_e = np.hstack([ents[parent], g.obj[triple][:, None]])
        cand_t = np.hstack([tris[parent], triple[:, None]])
        batch = scorer.score(cand_e, cand_t)
        evaluations += triple.size
        per_hop.append(int(triple.size))
        sel = rank_order(batch.compass, cand_e, cand_t)[: cfg.beam_width]
        kept.extend(batch_to_scored(g, batch, cand_e, cand_t, sel))
        ents, tris = cand_e[sel], cand_t[sel]

    bound = (len(cfg.seeds) + cfg.beam_width * (cfg.hops - 1)) * g.max_out_degree()
    if evaluations > bound:
        raise AssertionError(f"score evaluations {evaluations} exceed the beam bound {bound}")
    return SearchReport(
        top_k(kept, cfg.top_k), evaluations, evaluations, time.perf_counter() - start, per_hop
    )


def score_neighbors(
    g: GraphSnapshot,
    entity: str,
    scorer: CompassScorer,
    context_path: Optional[Path] = None,
    top_n: int = 10,
    allow_revisit: bool = False,
) -> list[tuple[Triple, SignalBreakdown]]:
    """Score every out-edge of ``entity`` as a one-step extension of ``context_path``."""
    u = g.index_of(entity)
    if context_path is None or not context_path.triples:
        context_path = Path.empty(entity)
    if context_path.end != entity:
        raise PathError(f"context path ends at {context_path.end!r}, not {entity!r}")
    ents = np.array([[g.index_of(e) for e in context_path.entities]], np.int64)
    tris = np.array([list(context_path.triples)], np.int64).reshape(1, -1)
    assert ents[0, -1] == u
    _, triple = kernels.expand_frontier(g.indptr, g.obj, ents, allow_revisit)
    if triple.size == 0:
        return []
    cand_e = np.hstack([np.repeat(ents, triple.size, axis=0), g.obj[triple][:, None]])
    cand_t = np.hstack([np.repeat(tris, triple.size, axis=0), triple[:, None]])
    batch = scorer.score(cand_e, cand_t)
    sel = rank_order(batch.compass, cand_e, cand_t)[:top_n]
    return [(g.triples[int(triple[i])], batch.breakdown(i)) for i in sel]
