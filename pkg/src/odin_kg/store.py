"""Immutable knowledge-graph snapshot built from JSON-lines triple files."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

FORMAT_NAME = "odin-kg"
FORMAT_VERSION = 1


class IngestError(ValueError):
    """A triple record could not be parsed or the input was unusable."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GraphError(KeyError):
    """Lookup of an entity, relation or edge that is not in the snapshot."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "graph error"


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str
    timestamp: Optional[int] = None
    provenance: tuple[str, ...] = ()

    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)

    def to_record(self) -> dict:
        rec = {"s": self.subject, "r": self.relation, "o": self.object}
        if self.timestamp is not None:
            rec["t"] = self.timestamp
        if self.provenance:
            rec["prov"] = list(self.provenance)
        return rec


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """Read-only graph with canonical integer indexing.

    Entities and relations are indexed in sorted id order and triples in sorted
    ``(subject, relation, object)`` order, so integer comparisons agree with
    string comparisons and nothing depends on ingestion order.
    """

    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: tuple[Triple, ...]
    entity_index: dict[str, int] = field(repr=False)
    relation_index: dict[str, int] = field(repr=False)
    subj: np.ndarray = field(repr=False)
    rel: np.ndarray = field(repr=False)
    obj: np.ndarray = field(repr=False)
    timestamps: np.ndarray = field(repr=False)  # float64, NaN where absent
    indptr: np.ndarray = field(repr=False)
    relation_counts: dict[str, int] = field(repr=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_triples(
        cls, triples: Iterable[Triple], entities: Iterable[str] = ()
    ) -> "GraphSnapshot":
        merged: dict[tuple[str, str, str], Triple] = {}
        for tr in triples:
            if not tr.subject or not tr.object or not tr.relation:
                raise IngestError("subject, relation and object must be non-empty")
            prev = merged.get(tr.key())
            if prev is None:
                merged[tr.key()] = Triple(
                    tr.subject, tr.relation, tr.object, tr.timestamp,
                    tuple(sorted(set(tr.provenance))),
                )
            else:
                ts = [t for t in (prev.timestamp, tr.timestamp) if t is not None]
                merged[tr.key()] = Triple(
                    tr.subject, tr.relation, tr.object,
                    max(ts) if ts else None,
                    tuple(sorted(set(prev.provenance) | set(tr.provenance))),
                )
        ent_set = set(entities)
        if "" in ent_set:
            raise IngestError("entity ids must be non-empty")
        for s, _, o in merged:
            ent_set.add(s)
            ent_set.add(o)
        if not merged:
            raise IngestError("empty graph")

        ents = tuple(sorted(ent_set))
        rels = tuple(sorted({r for _, r, _ in merged}))
        eidx = {e: i for i, e in enumerate(ents)}
        ridx = {r: i for i, r in enumerate(rels)}
        ordered = tuple(merged[k] for k in sorted(merged))

        m = len(ordered)
        subj = np.fromiter((eidx[t.subject] for t in ordered), np.int64, m)
        rel = np.fromiter((ridx[t.relation] for t in ordered), np.int64, m)
        obj = np.fromiter((eidx[t.object] for t in ordered), np.int64, m)
        ts = np.fromiter(
            (np.nan if t.timestamp is None else float(t.timestamp) for t in ordered),
            np.float64, m,
        )
        indptr = np.searchsorted(subj, np.arange(len(ents) + 1)).astype(np.int64)
        counts = np.bincount(rel, minlength=len(rels))
        rc = {r: int(c) for r, c in zip(rels, counts)}
        for arr in (subj, rel, obj, ts, indptr):
            arr.setflags(write=False)
        return cls(ents, rels, ordered, eidx, ridx, subj, rel, obj, ts, indptr, rc)

    # -- statistics -------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def total_triples(self) -> int:
        return len(self.triples)

    @property
    def max_timestamp(self) -> Optional[int]:
        if np.isnan(self.timestamps).all():
            return None
        return int(np.nanmax(self.timestamps))

    @property
    def avg_out_degree(self) -> float:
        return self.total_triples / self.num_entities

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def max_out_degree(self) -> int:
        return int(self.out_degree.max()) if self.num_entities else 0

    # -- lookups ----------------------------------------------------------

    def index_of(self, entity: str) -> int:
        try:
            return self.entity_index[entity]
        except KeyError:
            raise GraphError(f"entity not found: {entity!r}") from None

    def has_edge(self, s: str, r: str, o: str) -> bool:
        return self.triple_index(s, r, o) is not None

    def triple_index(self, s: str, r: str, o: str) -> Optional[int]:
        si = self.entity_index.get(s)
        ri = self.relation_index.get(r)
        oi = self.entity_index.get(o)
        if si is None or ri is None or oi is None:
            return None
        lo, hi = self.indptr[si], self.indptr[si + 1]
        # out-edges of s are sorted by (relation, object)
        keys = self.rel[lo:hi] * self.num_entities + self.obj[lo:hi]
        want = ri * self.num_entities + oi
        pos = int(np.searchsorted(keys, want))
        if pos < hi - lo and keys[pos] == want:
            return int(lo + pos)
        return None

    def provenance(self, triple_index: int) -> tuple[str, ...]:
        return self.triples[triple_index].provenance

    # -- serialization ----------------------------------------------------

    def dump(self, fh) -> None:
        isolated = sorted(set(self.entities) - {e for t in self.triples for e in (t.subject, t.object)})
        header = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
        if isolated:
            header["entities"] = isolated
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for t in self.triples:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.dump(fh)


def neighbors(g: GraphSnapshot, entity: str) -> list[tuple[str, str, int]]:
    """Out-edges of ``entity`` as ``(relation, object, triple_index)``.

    Ordered by relation id, then object id.
    """
    u = g.index_of(entity)
    return [
        (g.relations[g.rel[t]], g.entities[g.obj[t]], t)
        for t in range(int(g.indptr[u]), int(g.indptr[u + 1]))
    ]


def relation_frequency(g: GraphSnapshot, relation: str) -> float:
    try:
        return g.relation_counts[relation] / g.total_triples
    except KeyError:
        raise GraphError(f"relation not found: {relation!r}") from None


def _parse_record(obj, lineno: int) -> Triple:
    if not isinstance(obj, dict):
        raise IngestError("record must be a JSON object", lineno)
    try:
        s, r, o = obj["s"], obj["r"], obj["o"]
    except KeyError as exc:
        raise IngestError(f"missing field {exc.args[0]!r}", lineno) from None
    for name, val in (("s", s), ("r", r), ("o", o)):
        if not isinstance(val, str) or not val:
            raise IngestError(f"field {name!r} must be a non-empty string", lineno)
    t = obj.get("t")
    if t is not None and (isinstance(t, bool) or not isinstance(t, int) or t < 0):
        raise IngestError("field 't' must be a non-negative integer", lineno)
    prov = obj.get("prov", [])
    if not isinstance(prov, list) or not all(isinstance(p, str) for p in prov):
        raise IngestError("field 'prov' must be a list of strings", lineno)
    return Triple(s, r, o, t, tuple(prov))


def ingest(lines: Iterable[str], entities: Iterable[str] = ()) -> GraphSnapshot:
    """Build a snapshot from JSON-lines triple records.

    A leading ``{"format": "odin-kg", ...}`` header (snapshot files) is accepted
    and may list isolated entities.
    """
    triples = []
    extra = list(entities)
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON ({exc.msg})", lineno) from None
        if isinstance(obj, dict) and "format" in obj:
            if obj.get("format") != FORMAT_NAME or obj.get("version") != FORMAT_VERSION:
                raise IngestError("unsupported snapshot header", lineno)
            extra.extend(obj.get("entities", []))
            continue
        triples.append(_parse_record(obj, lineno))
    if not triples:
        raise IngestError("empty graph")
    return GraphSnapshot.from_triples(triples, extra)


def load(path, entities_path=None) -> GraphSnapshot:
    extra = []
    if entities_path is not None:
        extra = [ln.strip() for ln in Path(entities_path).read_text("utf-8").splitlines() if ln.strip()]
    with open(path, encoding="utf-8") as fh:
        return ingest(fh, extra)


def from_edges(edges: Iterable[tuple], entities: Iterable[str] = ()) -> GraphSnapshot:
    """Convenience constructor from ``(s, r, o[, t[, prov]])`` tuples."""
    triples = []
    for e in edges:
        s, r, o = (str(x) for x in e[:3])
        t = int(e[3]) if len(e) > 3 and e[3] is not None else None
        prov = tuple(str(p) for p in e[4]) if len(e) > 4 else ()
        triples.append(Triple(s, r, o, t, prov))
    return GraphSnapshot.from_triples(triples, entities)
