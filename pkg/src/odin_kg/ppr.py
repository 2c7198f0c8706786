"""Personalized PageRank from a seed set.

``ppr_local_push`` is the production path (residual push, compiled kernel);
``ppr_exact`` is a sparse power-iteration oracle used to validate it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .store import GraphError, GraphSnapshot

EXACT_MAX_ENTITIES = 100_000


class PprError(ValueError):
    pass


@dataclass(frozen=True)
class PprConfig:
    alpha: float = 0.15
    epsilon: float = 1e-4
    symmetrize: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise PprError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.epsilon > 0.0:
            raise PprError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class PprVector:
    """Dense PPR values over the snapshot's entity index."""

    entities: tuple[str, ...]
    values: np.ndarray
    seed_set: frozenset[str]
    index: dict[str, int] = field(repr=False)

    def __getitem__(self, entity: str) -> float:
        i = self.index.get(entity)
        return 0.0 if i is None else float(self.values[i])

    @property
    def scores(self) -> dict[str, float]:
        nz = np.flatnonzero(self.values)
        return {self.entities[i]: float(self.values[i]) for i in nz}

    def total(self) -> float:
        return float(self.values.sum())

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"e": e, "score": s}) + "\n" for e, s in sorted(self.scores.items())
        )


def _seed_indices(g: GraphSnapshot, seeds: Iterable[str]) -> np.ndarray:
    seeds = sorted(set(seeds))
    if not seeds:
        raise PprError("seed set is empty")
    try:
        return np.array([g.index_of(s) for s in seeds], dtype=np.int64)
    except GraphError as exc:
        raise PprError(f"seed not in graph: {exc}") from None


def _walk_arrays(g: GraphSnapshot, symmetrize: bool) -> tuple[np.ndarray, np.ndarray]:
    if not symmetrize:
        return g.indptr, g.obj
    src = np.concatenate([g.subj, g.obj])
    dst = np.concatenate([g.obj, g.subj])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.searchsorted(src, np.arange(g.num_entities + 1)).astype(np.int64)
    return indptr, np.ascontiguousarray(dst)


def _wrap(g: GraphSnapshot, values: np.ndarray, seed_idx: np.ndarray) -> PprVector:
    return PprVector(
        g.entities, values, frozenset(g.entities[i] for i in seed_idx), g.entity_index
    )


def ppr_local_push(g: GraphSnapshot, seeds: Iterable[str], cfg: PprConfig = PprConfig()) -> PprVector:
    """Approximate PPR by residual push.

    Entities are pushed lowest index first. Pushing stops once the leftover
    residual mass is at most ``cfg.epsilon``, which bounds every entity's
    underestimate by ``epsilon``.
    """
    seed_idx = _seed_indices(g, seeds)
    indptr, targets = _walk_arrays(g, cfg.symmetrize)
    values = kernels.local_push(indptr, targets, seed_idx, float(cfg.alpha), float(cfg.epsilon))
    return _wrap(g, values, seed_idx)


def transition_matrix(g: GraphSnapshot, symmetrize: bool = False) -> sp.csr_matrix:
    """Row-stochastic walk matrix; dangling rows are left empty."""
    indptr, targets = _walk_arrays(g, symmetrize)
    deg = np.diff(indptr).astype(np.float64)
    rows = np.repeat(np.arange(g.num_entities), np.diff(indptr))
    data = 1.0 / deg[rows]
    n = g.num_entities
    return sp.csr_matrix((data, (rows, targets)), shape=(n, n))


def ppr_exact(
    g: GraphSnapshot,
    seeds: Iterable[str],
    alpha: float = 0.15,
    iterations: int = 10_000,
    tol: float = 1e-10,
    symmetrize: bool = False,
) -> PprVector:
    """Power iteration of ``pi = (1 - alpha) P^T pi + alpha s``.

    Mass sitting on dangling entities is returned to the seed distribution.
    """
    if g.num_entities > EXACT_MAX_ENTITIES:
        raise PprError(
            f"exact PPR limited to {EXACT_MAX_ENTITIES} entities, graph has {g.num_entities}"
        )
    if iterations < 1:
        raise PprError("iterations must be positive")
    seed_idx = _seed_indices(g, seeds)
    n = g.num_entities
    s = np.zeros(n)
    s[seed_idx] = 1.0 / len(seed_idx)
    pt = transition_matrix(g, symmetrize).T.tocsr()
    dangling = np.diff(_walk_arrays(g, symmetrize)[0]) == 0
    pi = s.copy()
    for _ in range(iterations):
        nxt = (1.0 - alpha) * (pt @ pi + pi[dangling].sum() * s) + alpha * s
        done = np.abs(nxt - pi).max() < tol
        pi = nxt
        if done:
            break
    return _wrap(g, pi, seed_idx)


def struct_score(ppr: PprVector, path, normalizer: float) -> float:
    """Mean PPR of the entities reached by ``path`` (the start is excluded),
    divided by ``normalizer`` and clamped to [0, 1]."""
    if normalizer <= 0:
        raise PprError("normalizer must be positive")
    reached = path.entities[1:]
    if not reached:
        raise PprError("path is empty")
    raw = sum(ppr[e] for e in reached) / len(reached)
    return min(1.0, max(0.0, raw / normalizer))
