from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .store import GraphError, GraphSnapshot


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class Path:
    """A walk through the snapshot: ``entities[i] -> entities[i + 1]`` via ``triples[i]``.

    ``triples`` holds triple indices of the snapshot the path was built on.
    An empty path just marks a start entity.
    """

    entities: tuple[str, ...]
    triples: tuple[int, ...] = ()

    @property
    def hops(self) -> int:
        return len(self.triples)

    @property
    def start(self) -> str:
        return self.entities[0]

    @property
    def end(self) -> str:
        return self.entities[-1]

    @classmethod
    def empty(cls, start: str) -> "Path":
        return cls((start,), ())

    @classmethod
    def from_triples(cls, g: GraphSnapshot, triples: Sequence[int]) -> "Path":
        if not triples:
            raise PathError("use Path.empty() for a path without triples")
        ents = [g.entities[g.subj[triples[0]]]]
        for t in triples:
            if g.entities[g.subj[t]] != ents[-1]:
                raise PathError(f"triple {t} does not continue the path at {ents[-1]!r}")
            ents.append(g.entities[g.obj[t]])
        return cls(tuple(ents), tuple(int(t) for t in triples))

    @classmethod
    def from_edges(cls, g: GraphSnapshot, edges: Iterable[tuple[str, str, str]]) -> "Path":
        idx = []
        for s, r, o in edges:
            t = g.triple_index(s, r, o)
            if t is None:
                raise GraphError(f"not an observed edge: ({s!r}, {r!r}, {o!r})")
            idx.append(t)
        return cls.from_triples(g, idx)

    def extend(self, g: GraphSnapshot, triple: int) -> "Path":
        if g.entities[g.subj[triple]] != self.end:
            raise PathError(f"triple {triple} does not start at {self.end!r}")
        return Path(self.entities + (g.entities[g.obj[triple]],), self.triples + (int(triple),))

    def is_simple(self) -> bool:
        return len(set(self.entities)) == len(self.entities)

    def edges(self, g: GraphSnapshot) -> list[tuple[str, str, str]]:
        return [g.triples[t].key() for t in self.triples]
