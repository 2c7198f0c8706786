"""Exhaustive oracle, baselines and the metrics harness.

Every method here scores through the same :class:`CompassScorer` and the same
ranking key as :func:`search.discover`, so differences between rows come from
the search policy alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .compass import SIGNALS, CompassScorer
from .search import (
    ScoredPath,
    SearchConfig,
    SearchReport,
    batch_to_scored,
    discover,
    rank_order,
    seed_indices,
    top_k,
)
from .store import GraphSnapshot

MAX_ORACLE_PATHS = 10_000_000


class OracleGuardError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def estimate_path_count(g: GraphSnapshot, seeds: np.ndarray, h: int) -> int:
    """Number of walks of length 1..h from the seeds; an upper bound on simple paths."""
    adj = sp.csr_matrix(
        (np.ones(g.total_triples), (g.obj, g.subj)), shape=(g.num_entities, g.num_entities)
    )
    x = np.bincount(seeds, minlength=g.num_entities).astype(float)
    total = 0.0
    for _ in range(h):
        x = adj @ x
        total += x.sum()
        if total > MAX_ORACLE_PATHS:
            break
    return int(round(total))


@dataclass
class OracleResult:
    results: list[ScoredPath]
    paths_per_length: list[int]
    elapsed: float

    @property
    def paths_enumerated(self) -> int:
        return sum(self.paths_per_length)


def exhaustive_oracle(
    g: GraphSnapshot,
    seeds: Iterable[str],
    h: int,
    k: int,
    scorer: CompassScorer,
    allow_revisit: bool = False,
) -> OracleResult:
    """Exact top-k over every path of length 1..h from the seeds.

    Paths of one length form one batch, so the ``frontier_max`` normalizer is
    the one an unpruned beam would see at that hop.
    """
    start = time.perf_counter()
    sidx = seed_indices(g, seeds)
    est = estimate_path_count(g, sidx, h)
    if est > MAX_ORACLE_PATHS:
        raise OracleGuardError(
            f"oracle would enumerate more than {MAX_ORACLE_PATHS} paths at h={h}; use a smaller h"
        )
    levels = kernels.enumerate_paths(g.indptr, g.obj, sidx, h, allow_revisit)
    pool: list[ScoredPath] = []
    counts = []
    for tris in levels:
        counts.append(int(tris.shape[0]))
        if tris.shape[0] == 0:
            continue
        ents = np.hstack([g.subj[tris[:, :1]], g.obj[tris]])
        batch = scorer.score(ents, tris)
        sel = rank_order(batch.compass, ents, tris)[:k]
        pool.extend(batch_to_scored(g, batch, ents, tris, sel))
    return OracleResult(top_k(pool, k), counts, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def random_walk_baseline(
    g: GraphSnapshot,
    seeds: Iterable[str],
    h: int,
    scorer: CompassScorer,
    k: int = 50,
    walks: int = 1000,
    rng_seed: int = 0,
    allow_revisit: bool = False,
) -> SearchReport:
    """Uniform out-edge walks of length <= h; every distinct prefix is a candidate."""
    start = time.perf_counter()
    sidx = seed_indices(g, seeds)
    rng = np.random.default_rng(rng_seed)
    found: list[set[tuple[int, ...]]] = [set() for _ in range(h)]
    for w in range(walks):
        u = int(sidx[w % len(sidx)])
        visited = {u}
        tri_seq: list[int] = []
        for depth in range(h):
            lo, hi = int(g.indptr[u]), int(g.indptr[u + 1])
            options = [t for t in range(lo, hi) if allow_revisit or int(g.obj[t]) not in visited]
            if not options:
                break
            t = options[int(rng.integers(len(options)))]
            tri_seq.append(t)
            u = int(g.obj[t])
            visited.add(u)
            found[depth].add(tuple(tri_seq))

    pool: list[ScoredPath] = []
    evaluations = 0
    per_hop = []
    for paths in found:
        per_hop.append(len(paths))
        if not paths:
            continue
        tris = np.array(sorted(paths), np.int64)
        ents = np.hstack([g.subj[tris[:, :1]], g.obj[tris]])
        batch = scorer.score(ents, tris)
        evaluations += tris.shape[0]
        sel = rank_order(batch.compass, ents, tris)[:k]
        pool.extend(batch_to_scored(g, batch, ents, tris, sel))
    return SearchReport(top_k(pool, k), evaluations, evaluations, time.perf_counter() - start, per_hop)


PPR_ONLY_DISABLED = frozenset(s for s in SIGNALS if s != "struct")


def ppr_only_baseline(g: GraphSnapshot, cfg: SearchConfig, scorer: CompassScorer) -> SearchReport:
    return discover(g, cfg, scorer.with_disabled(PPR_ONLY_DISABLED))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def path_ids(results: Iterable[ScoredPath]) -> set[tuple[int, ...]]:
    return {sp.path.triples for sp in results}


def coverage_at_k(results: Iterable[ScoredPath], reference: Sequence[ScoredPath]) -> float:
    """Share of the reference paths recovered, by exact triple-sequence identity."""
    if not reference:
        return 1.0
    return len(path_ids(results) & path_ids(reference)) / len(reference)


def cross_community_fraction(results: Sequence[ScoredPath], assignment: Optional[dict[str, int]]) -> float:
    """Share of paths with at least one edge joining two communities."""
    if not results or not assignment:
        return 0.0
    hits = 0
    for sp in results:
        ents = sp.path.entities
        if any(assignment.get(u) != assignment.get(v) for u, v in zip(ents, ents[1:])):
            hits += 1
    return hits / len(results)


@dataclass
class EvalRow:
    method: str
    coverage_at_k: float
    paths_explored: int
    elapsed: float
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "coverage_at_k": self.coverage_at_k,
            "paths_explored": self.paths_explored,
            "elapsed_seconds": self.elapsed,
        }
        out.update(self.extra)
        return out


@dataclass
class EvalReport:
    rows: list[EvalRow]
    k: int
    title: str = ""

    def to_json(self, include_timing: bool = True) -> dict:
        rows = [r.to_json() for r in self.rows]
        if not include_timing:
            for r in rows:
                r.pop("elapsed_seconds")
        return {"title": self.title, "k": self.k, "rows": rows}

    def to_table(self, include_timing: bool = True) -> str:
        extra_cols = sorted({c for r in self.rows for c in r.extra})
        head = ["method", f"coverage@{self.k}", "paths_explored"] + extra_cols
        if include_timing:
            head.append("time_s")
        body = []
        for r in self.rows:
            cells = [r.method, f"{r.coverage_at_k:.3f}", str(r.paths_explored)]
            cells += [_fmt(r.extra.get(c, "")) for c in extra_cols]
            if include_timing:
                cells.append(f"{r.elapsed:.3f}")
            body.append(cells)
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]

        def line(cells):
            return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

        out = [line(head), "  ".join("-" * w for w in widths)] + [line(c) for c in body]
        if self.title:
            out.insert(0, self.title)
        return "\n".join(out)


def _fmt(v) -> str:
    return f"{v:.3f}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# Method comparison and ablation
# ---------------------------------------------------------------------------


def compare_methods(
    g: GraphSnapshot,
    cfg: SearchConfig,
    scorer: CompassScorer,
    walks: int = 1000,
    rng_seed: int = 0,
) -> EvalReport:
    """Beam search, random walks, PPR-only and the oracle against oracle top-k."""
    oracle = exhaustive_oracle(g, cfg.seeds, cfg.hops, cfg.top_k, scorer, cfg.allow_revisit)
    rows = [EvalRow("exhaustive", 1.0, oracle.paths_enumerated, oracle.elapsed)]
    beam = discover(g, cfg, scorer)
    rows.append(EvalRow("beam", coverage_at_k(beam.results, oracle.results), beam.paths_explored, beam.elapsed))
    rw = random_walk_baseline(
        g, cfg.seeds, cfg.hops, scorer, cfg.top_k, walks, rng_seed, cfg.allow_revisit
    )
    rows.append(EvalRow("random_walk", coverage_at_k(rw.results, oracle.results), rw.paths_explored, rw.elapsed))
    ppr = ppr_only_baseline(g, cfg, scorer)
    rows.append(EvalRow("ppr_only", coverage_at_k(ppr.results, oracle.results), ppr.paths_explored, ppr.elapsed))
    return EvalReport(rows, cfg.top_k, "method comparison")


ABLATIONS: dict[str, frozenset] = {
    "Full": frozenset(),
    "No-NPLL": frozenset({"edge"}),
    "No-Temporal": frozenset({"temp"}),
    "No-Bridge": frozenset({"bridge", "affinity"}),
}


def run_ablation(
    g: GraphSnapshot,
    cfg: SearchConfig,
    scorer: CompassScorer,
    toggles: Optional[dict[str, Iterable[str]]] = None,
    reference: Optional[Sequence[ScoredPath]] = None,
) -> EvalReport:
    """One discover() run per toggle set, with the named signals forced to 1.

    Coverage is measured against ``reference`` (default: the full-score
    oracle top-k).
    """
    toggles = ABLATIONS if toggles is None else {k: frozenset(v) for k, v in toggles.items()}
    base = scorer.with_disabled(scorer.disabled)
    if reference is None:
        reference = exhaustive_oracle(g, cfg.seeds, cfg.hops, cfg.top_k, base, cfg.allow_revisit).results
    assignment = scorer.metadata.assignment if scorer.metadata is not None else None
    rows = []
    for name, off in toggles.items():
        rep = discover(g, cfg, base.with_disabled(base.disabled | off))
        rows.append(EvalRow(
            name,
            coverage_at_k(rep.results, reference),
            rep.paths_explored,
            rep.elapsed,
            {
                "cross_community": cross_community_fraction(rep.results, assignment),
                "score_evaluations": rep.score_evaluations,
            },
        ))
    return EvalReport(rows, cfg.top_k, "ablation")


# ---------------------------------------------------------------------------
# Recall versus beam width
# ---------------------------------------------------------------------------


@dataclass
class RecallPoint:
    beam_width: int
    mean_overlap: float
    mean_recall: float
    reference_bound: float


def recall_curve(
    graphs: Sequence[tuple[GraphSnapshot, Sequence[str]]],
    b_values: Sequence[int],
    h: int,
    k: int,
    scorer_factory: Callable[[GraphSnapshot, Sequence[str]], CompassScorer],
    allow_revisit: bool = False,
) -> list[RecallPoint]:
    """Mean ``|oracle top-k & beam results|`` per beam width.

    The bound ``k (1 - exp(-b/d))`` uses the family's mean out-degree and is
    listed for reference only; its premise does not hold for a product score.
    """
    overlaps = np.zeros((len(graphs), len(b_values)))
    sizes = np.zeros(len(graphs))
    degrees = []
    for gi, (g, seeds) in enumerate(graphs):
        scorer = scorer_factory(g, seeds)
        ref = exhaustive_oracle(g, seeds, h, k, scorer, allow_revisit).results
        sizes[gi] = len(ref)
        degrees.append(g.avg_out_degree)
        for bi, b in enumerate(b_values):
            rep = discover(g, SearchConfig(tuple(seeds), h, b, k, allow_revisit), scorer)
            overlaps[gi, bi] = len(path_ids(rep.results) & path_ids(ref))
    d = float(np.mean(degrees)) if degrees else 1.0
    safe = np.where(sizes > 0, sizes, 1.0)
    recall = np.where(sizes[:, None] > 0, overlaps / safe[:, None], 1.0)
    return [
        RecallPoint(int(b), float(overlaps[:, i].mean()), float(recall[:, i].mean()), k * (1 - math.exp(-b / d)))
        for i, b in enumerate(b_values)
    ]


def recall_table(points: Sequence[RecallPoint], k: int) -> str:
    head = ["b", f"mean |oracle@{k} & beam|", "mean recall", f"k(1-e^-b/d)"]
    rows = [[str(p.beam_width), f"{p.mean_overlap:.3f}", f"{p.mean_recall:.3f}", f"{p.reference_bound:.3f}"] for p in points]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + rows)
