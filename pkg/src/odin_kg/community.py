"""Offline community metadata: assignments, bridge entities, affinity table.

The online scorer only consumes the three tables written here, so any detector
that produces a total entity -> community map can be plugged in.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable, Optional

import networkx as nx
import numpy as np

from .store import GraphSnapshot

log = logging.getLogger(__name__)

COMMUNITIES_FILE = "communities.jsonl"
BRIDGES_FILE = "bridges.jsonl"
AFFINITY_FILE = "affinity.jsonl"


class MetadataError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeEntry:
    entity: str
    communities: tuple[int, ...]
    strength: int


@dataclass(frozen=True)
class AffinityTable:
    """Symmetric community-pair scores; keys are stored with ``ci < cj``."""

    scores: dict[tuple[int, int], float] = field(default_factory=dict)

    def get(self, ci: int, cj: int) -> float:
        if ci == cj:
            return 0.0
        return self.scores.get((min(ci, cj), max(ci, cj)), 0.0)

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class CommunityMetadata:
    assignment: dict[str, int]
    bridges: tuple[BridgeEntry, ...] = ()
    affinity: AffinityTable = field(default_factory=AffinityTable)

    @property
    def num_communities(self) -> int:
        return len(set(self.assignment.values()))

    def strength(self) -> dict[str, int]:
        return {b.entity: b.strength for b in self.bridges}


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def undirected_graph(g: GraphSnapshot) -> nx.Graph:
    ug = nx.Graph()
    ug.add_nodes_from(range(g.num_entities))
    ug.add_edges_from((int(u), int(v)) for u, v in zip(g.subj, g.obj) if u != v)
    return ug


def greedy_modularity(ug: nx.Graph, rng_seed: int) -> list[set[int]]:
    return [set(c) for c in nx.community.greedy_modularity_communities(ug)]


def louvain(ug: nx.Graph, rng_seed: int) -> list[set[int]]:
    return [set(c) for c in nx.community.louvain_communities(ug, seed=rng_seed)]


def components(ug: nx.Graph, rng_seed: int) -> list[set[int]]:
    return [set(c) for c in nx.connected_components(ug)]


DETECTORS: dict[str, Callable[[nx.Graph, int], list[set[int]]]] = {
    "greedy": greedy_modularity,
    "louvain": louvain,
    "components": components,
}


def detect_communities(
    g: GraphSnapshot, detector: Callable | str = "greedy", rng_seed: int = 0
) -> dict[str, int]:
    """Total entity -> community map. Ids are assigned in order of each
    community's smallest entity id, so labels do not depend on detector order."""
    fn = DETECTORS[detector] if isinstance(detector, str) else detector
    groups = fn(undirected_graph(g), rng_seed)
    labels = np.full(g.num_entities, -1, np.int64)
    for cid, grp in enumerate(sorted(groups, key=min)):
        labels[sorted(grp)] = cid
    if (labels < 0).any():
        raise MetadataError("detector left entities unassigned")
    return {e: int(c) for e, c in zip(g.entities, labels)}


def _labels(g: GraphSnapshot, assignment: dict[str, int]) -> np.ndarray:
    try:
        return np.array([assignment[e] for e in g.entities], np.int64)
    except KeyError as exc:
        raise MetadataError(f"assignment missing entity {exc.args[0]!r}") from None


def compute_bridges(g: GraphSnapshot, assignment: dict[str, int]) -> list[BridgeEntry]:
    """Entities whose 1-hop neighbourhood (own community included) spans >= 2 communities."""
    lab = _labels(g, assignment)
    n = g.num_entities
    m = int(lab.max()) + 1
    ent = np.r_[np.arange(n), g.subj, g.obj]
    com = np.r_[lab, lab[g.obj], lab[g.subj]]
    pairs = np.unique(ent * m + com)
    owner, comm = pairs // m, pairs % m
    span = np.bincount(owner, minlength=n)
    out = []
    for u in np.flatnonzero(span >= 2):
        cs = tuple(int(c) for c in comm[owner == u])
        out.append(BridgeEntry(g.entities[u], cs, len(cs)))
    out.sort(key=lambda b: (-b.strength, b.entity))
    return out


def compute_affinity(g: GraphSnapshot, assignment: dict[str, int]) -> AffinityTable:
    """Cross-community edge density ``edges / (|ci| * |cj|)``, max-normalized to 1.

    Edges are counted once per unordered entity pair.
    """
    lab = _labels(g, assignment)
    n = g.num_entities
    u = np.minimum(g.subj, g.obj)
    v = np.maximum(g.subj, g.obj)
    pair = np.unique(u * n + v)
    u, v = pair // n, pair % n
    cu, cv = lab[u], lab[v]
    cross = cu != cv
    if not cross.any():
        return AffinityTable()
    ci = np.minimum(cu[cross], cv[cross])
    cj = np.maximum(cu[cross], cv[cross])
    m = int(lab.max()) + 1
    keys, counts = np.unique(ci * m + cj, return_counts=True)
    sizes = np.bincount(lab, minlength=m)
    a, b = keys // m, keys % m
    density = counts / (sizes[a] * sizes[b])
    density = density / density.max()
    return AffinityTable({(int(x), int(y)): float(d) for x, y, d in zip(a, b, density)})


def build_metadata(
    g: GraphSnapshot, detector: Callable | str = "greedy", rng_seed: int = 0
) -> CommunityMetadata:
    assignment = detect_communities(g, detector, rng_seed)
    return CommunityMetadata(
        assignment, tuple(compute_bridges(g, assignment)), compute_affinity(g, assignment)
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _write_jsonl(path: FsPath, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def save_metadata(meta: CommunityMetadata, out_dir) -> None:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        out / COMMUNITIES_FILE,
        ({"entity": e, "community": c} for e, c in sorted(meta.assignment.items())),
    )
    _write_jsonl(
        out / BRIDGES_FILE,
        ({"entity": b.entity, "communities": list(b.communities), "strength": b.strength}
         for b in meta.bridges),
    )
    _write_jsonl(
        out / AFFINITY_FILE,
        ({"ci": ci, "cj": cj, "score": s} for (ci, cj), s in sorted(meta.affinity.scores.items())),
    )


def _read_jsonl(path: FsPath):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetadataError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(row, dict):
                raise MetadataError(f"{path.name} line {lineno}: expected an object")
            yield lineno, row


def _community_id(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 0:
        raise MetadataError(f"{where}: community id must be a non-negative integer")
    return x


def load_metadata(in_dir) -> Optional[CommunityMetadata]:
    """Read the three metadata files; ``None`` when none of them exist."""
    d = FsPath(in_dir)
    paths = [d / COMMUNITIES_FILE, d / BRIDGES_FILE, d / AFFINITY_FILE]
    if not any(p.exists() for p in paths):
        return None
    assignment: dict[str, int] = {}
    bridges: list[BridgeEntry] = []
    scores: dict[tuple[int, int], float] = {}
    try:
        if paths[0].exists():
            for ln, row in _read_jsonl(paths[0]):
                where = f"{COMMUNITIES_FILE} line {ln}"
                e = row.get("entity")
                if not isinstance(e, str) or not e:
                    raise MetadataError(f"{where}: entity must be a non-empty string")
                assignment[e] = _community_id(row.get("community"), where)
        if paths[1].exists():
            for ln, row in _read_jsonl(paths[1]):
                where = f"{BRIDGES_FILE} line {ln}"
                e = row.get("entity")
                cs = row.get("communities")
                st = row.get("strength")
                if not isinstance(e, str) or not e or not isinstance(cs, list):
                    raise MetadataError(f"{where}: malformed bridge entry")
                cs = tuple(sorted({_community_id(c, where) for c in cs}))
                if isinstance(st, bool) or not isinstance(st, int) or st < 2 or st != len(cs):
                    raise MetadataError(f"{where}: strength must equal the number of communities (>= 2)")
                bridges.append(BridgeEntry(e, cs, st))
        if paths[2].exists():
            for ln, row in _read_jsonl(paths[2]):
                where = f"{AFFINITY_FILE} line {ln}"
                ci = _community_id(row.get("ci"), where)
                cj = _community_id(row.get("cj"), where)
                s = row.get("score")
                if isinstance(s, bool) or not isinstance(s, (int, float)):
                    raise MetadataError(f"{where}: score must be a number")
                if not 0.0 <= s <= 1.0:
                    raise MetadataError(f"{where}: affinity out of range: {s}")
                if ci == cj:
                    raise MetadataError(f"{where}: affinity needs two distinct communities")
                scores[(min(ci, cj), max(ci, cj))] = float(s)
    except OSError as exc:
        raise MetadataError(str(exc)) from None
    bridges.sort(key=lambda b: (-b.strength, b.entity))
    return CommunityMetadata(assignment, tuple(bridges), AffinityTable(scores))


def try_load_metadata(in_dir) -> Optional[CommunityMetadata]:
    """Like :func:`load_metadata` but degrades to ``None`` (signals neutral) on any error."""
    if in_dir is None:
        return None
    try:
        return load_metadata(in_dir)
    except MetadataError as exc:
        log.warning("community metadata unusable (%s); bridge and affinity disabled", exc)
        return None
