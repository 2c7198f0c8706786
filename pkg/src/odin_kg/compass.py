"""Six-signal multiplicative path score and its log-space attribution.

``compass = edge * struct * bridge * affinity * prior * temp``. Bridge and
affinity factors are boosts (>= 1), so the product is a ranking score rather
than a probability. Its logarithm is additive over signals, which makes
``ln(factor)`` the exact Shapley value of each signal in the log-score game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .community import CommunityMetadata
from .npll import NpllModel
from .paths import Path
from .ppr import PprVector
from .store import GraphError, GraphSnapshot

SIGNALS = ("edge", "struct", "bridge", "affinity", "prior", "temp")
SIGNAL_LABELS = {
    "edge": "edge plausibility",
    "struct": "structural importance",
    "bridge": "bridge entities",
    "affinity": "community affinity",
    "prior": "relation prior",
    "temp": "recency",
}
SECONDS_PER_DAY = 86_400


class VetoError(ValueError):
    """A zero factor leaves no finite log decomposition."""

    def __init__(self, signals: tuple[str, ...]):
        self.signals = signals
        super().__init__(
            "veto path has no finite log decomposition; vetoed by " + ", ".join(signals)
        )


@dataclass(frozen=True)
class CompassConfig:
    lambda_decay: float = 1.0 / (90 * SECONDS_PER_DAY)
    t_now: Optional[int] = None
    beta_bridge: float = 0.5
    rho: float = 0.5
    beta_affinity: float = 0.5
    prior_mode: str = "frequency"
    struct_normalizer_mode: str = "frontier_max"
    struct_normalizer_value: float = 1.0

    def __post_init__(self):
        if self.lambda_decay < 0 or self.beta_bridge < 0 or self.beta_affinity < 0:
            raise ValueError("lambda_decay, beta_bridge and beta_affinity must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.prior_mode not in ("frequency", "inverse_frequency"):
            raise ValueError(f"unknown prior_mode {self.prior_mode!r}")
        if self.struct_normalizer_mode not in ("frontier_max", "fixed"):
            raise ValueError(f"unknown struct_normalizer_mode {self.struct_normalizer_mode!r}")
        if self.struct_normalizer_value <= 0:
            raise ValueError("struct_normalizer_value must be positive")

    def now(self, g: GraphSnapshot) -> Optional[int]:
        return self.t_now if self.t_now is not None else g.max_timestamp


@dataclass(frozen=True)
class SignalBreakdown:
    s_edge: float
    s_struct: float
    s_bridge: float
    s_affinity: float
    s_prior: float
    s_temp: float

    @property
    def compass(self) -> float:
        return (
            self.s_edge * self.s_struct * self.s_bridge
            * self.s_affinity * self.s_prior * self.s_temp
        )

    @property
    def factors(self) -> dict[str, float]:
        return {name: getattr(self, "s_" + name) for name in SIGNALS}

    @property
    def shapley(self) -> Optional[dict[str, float]]:
        try:
            return explain(self)
        except VetoError:
            return None

    def vetoed_by(self) -> tuple[str, ...]:
        return tuple(name for name, v in self.factors.items() if v == 0.0)

    def to_json(self) -> dict:
        out = {"compass": self.compass, "factors": self.factors, "shapley": self.shapley}
        if out["shapley"] is None:
            out["veto"] = list(self.vetoed_by())
        return out


def explain(b: SignalBreakdown) -> dict[str, float]:
    """Per-signal attribution ``ln(factor)``; sums to ``ln(compass)``.

    Boosts above 1 come out positive, penalties below 1 negative.
    """
    vetoes = b.vetoed_by()
    if vetoes:
        raise VetoError(vetoes)
    return {name: math.log(v) for name, v in b.factors.items()}


def narrate(b: SignalBreakdown, rank: Optional[int] = None) -> str:
    """One-paragraph reading of a breakdown for analysts."""
    head = f"Path #{rank}" if rank is not None else "Path"
    if b.vetoed_by():
        names = ", ".join(SIGNAL_LABELS[s] for s in b.vetoed_by())
        return f"{head} scores 0: vetoed by {names}."
    phi = explain(b)
    ordered = sorted(phi.items(), key=lambda kv: (-kv[1], kv[0]))
    ups = [(k, v) for k, v in ordered if v > 0]
    downs = sorted(((k, v) for k, v in ordered if v < 0), key=lambda kv: (kv[1], kv[0]))
    parts = [f"{head} has COMPASS {b.compass:.6g} (log score {sum(phi.values()):.4f})."]
    if ups:
        parts.append(
            "Lifted by " + ", ".join(f"{SIGNAL_LABELS[k]} (phi_{k}=+{v:.4f})" for k, v in ups) + "."
        )
    if downs:
        parts.append(
            "Held back mostly by "
            + ", ".join(f"{SIGNAL_LABELS[k]} (phi_{k}={v:.4f})" for k, v in downs)
            + "."
        )
    if not ups and not downs:
        parts.append("Every signal is neutral.")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Single-path signals
# ---------------------------------------------------------------------------


def _require_hops(path: Path) -> None:
    if not path.triples:
        raise ValueError("path has no edges")


def temporal_score(g: GraphSnapshot, path: Path, cfg: CompassConfig = CompassConfig()) -> float:
    """Mean ``exp(-lambda * age)`` over the path's edges.

    Unstamped edges count as 1 and future stamps as age 0.
    """
    _require_hops(path)
    now = cfg.now(g)
    total = 0.0
    for t in path.triples:
        ts = g.triples[t].timestamp
        if ts is None or now is None:
            total += 1.0
        else:
            total += math.exp(-cfg.lambda_decay * max(0, now - ts))
    return total / path.hops


def _prior_term(freq: float, n_relations: int, mode: str) -> float:
    if mode == "frequency":
        return freq
    return min(1.0, 1.0 - freq + 1.0 / n_relations)


def prior_score(g: GraphSnapshot, path: Path, cfg: CompassConfig = CompassConfig()) -> float:
    _require_hops(path)
    total = 0.0
    for t in path.triples:
        r = g.triples[t].relation
        if r not in g.relation_counts:
            raise GraphError(f"relation not found: {r!r}")
        total += _prior_term(g.relation_counts[r] / g.total_triples, len(g.relations), cfg.prior_mode)
    return total / path.hops


def bridge_term(strength: int, cfg: CompassConfig) -> float:
    return 1.0 + cfg.beta_bridge * math.log(1.0 + strength)


def bridge_score(
    path: Path, meta: Optional[CommunityMetadata], cfg: CompassConfig = CompassConfig()
) -> float:
    """Power mean of bridge boosts over every entity on the path, start included."""
    _require_hops(path)
    if meta is None:
        return 1.0
    strength = meta.strength()
    vals = [bridge_term(strength[e], cfg) if e in strength else 1.0 for e in path.entities]
    return (sum(vals) / len(vals)) ** cfg.rho


def affinity_score(
    path: Path, meta: Optional[CommunityMetadata], cfg: CompassConfig = CompassConfig()
) -> float:
    """Product of ``1 + beta_a * A(c_i, c_j)`` over the path's cross-community edges."""
    _require_hops(path)
    if meta is None:
        return 1.0
    score = 1.0
    for u, v in zip(path.entities, path.entities[1:]):
        cu, cv = meta.assignment.get(u), meta.assignment.get(v)
        if cu is None or cv is None or cu == cv:
            continue
        score = score * (1.0 + cfg.beta_affinity * meta.affinity.get(cu, cv))
    return score


# ---------------------------------------------------------------------------
# Batched scorer shared by beam search, the oracle and the baselines
# ---------------------------------------------------------------------------


@dataclass
class ScoredBatch:
    """Factor arrays for a batch of same-length paths."""

    factors: dict[str, np.ndarray]
    compass: np.ndarray
    struct_normalizer: float

    def breakdown(self, i: int) -> SignalBreakdown:
        return SignalBreakdown(*(float(self.factors[name][i]) for name in SIGNALS))


@dataclass
class CompassScorer:
    """Precomputes per-triple and per-entity terms once, then scores path
    batches with additions and multiplications only. Every consumer therefore
    gets bit-identical scores for the same path and normalizer."""

    g: GraphSnapshot
    ppr: Optional[PprVector] = None
    model: Optional[NpllModel] = None
    metadata: Optional[CommunityMetadata] = None
    cfg: CompassConfig = field(default_factory=CompassConfig)
    disabled: frozenset = frozenset()

    def __post_init__(self):
        self.disabled = frozenset(self.disabled)
        unknown = self.disabled - set(SIGNALS)
        if unknown:
            raise ValueError(f"unknown signals: {sorted(unknown)}")
        g, cfg = self.g, self.cfg
        m = g.total_triples

        model = self.model if self.model is not None else NpllModel.fallback()
        self.edge_term = model.edge_scores(g)

        self.pi = self.ppr.values if self.ppr is not None else np.zeros(g.num_entities)

        now = cfg.now(g)
        if now is None:
            self.temp_term = np.ones(m)
        else:
            age = np.maximum(0.0, now - g.timestamps)
            self.temp_term = np.where(np.isnan(g.timestamps), 1.0, np.exp(-cfg.lambda_decay * age))

        freq = np.bincount(g.rel, minlength=len(g.relations)) / m
        if cfg.prior_mode == "frequency":
            rel_prior = freq
        else:
            rel_prior = np.minimum(1.0, 1.0 - freq + 1.0 / len(g.relations))
        self.prior_term = rel_prior[g.rel]

        self.bridge_term = np.ones(g.num_entities)
        self.affinity_term = np.ones(m)
        meta = self.metadata
        if meta is not None:
            for b in meta.bridges:
                i = g.entity_index.get(b.entity)
                if i is not None:
                    self.bridge_term[i] = bridge_term(b.strength, cfg)
            lab = np.array([meta.assignment.get(e, -1) for e in g.entities], np.int64)
            cu, cv = lab[g.subj], lab[g.obj]
            cross = np.flatnonzero((cu != cv) & (cu >= 0) & (cv >= 0))
            for t in cross:
                self.affinity_term[t] = 1.0 + cfg.beta_affinity * meta.affinity.get(int(cu[t]), int(cv[t]))

    @property
    def has_metadata(self) -> bool:
        return self.metadata is not None

    def with_disabled(self, signals: Iterable[str]) -> "CompassScorer":
        clone = object.__new__(CompassScorer)
        clone.__dict__.update(self.__dict__)
        clone.disabled = frozenset(signals)
        return clone

    def raw_struct(self, ents: np.ndarray) -> np.ndarray:
        hops = ents.shape[1] - 1
        acc = np.zeros(ents.shape[0])
        for j in range(1, hops + 1):
            acc = acc + self.pi[ents[:, j]]
        return acc / hops

    def struct_normalizer(self, raw: np.ndarray) -> float:
        if self.cfg.struct_normalizer_mode == "fixed":
            return float(self.cfg.struct_normalizer_value)
        top = float(raw.max()) if raw.size else 0.0
        return top if top > 0.0 else 1.0

    def score(self, ents: np.ndarray, tris: np.ndarray, normalizer: Optional[float] = None) -> ScoredBatch:
        """Score paths given as entity rows ``(C, L + 1)`` and triple rows ``(C, L)``.

        The struct normalizer defaults to the configured mode, with
        ``frontier_max`` taken over this batch.
        """
        ents = np.asarray(ents, np.int64)
        tris = np.asarray(tris, np.int64)
        c, hops = tris.shape
        if hops == 0:
            raise ValueError("paths must have at least one edge")
        one = np.ones(c)

        edge = one.copy()
        temp_sum = np.zeros(c)
        prior_sum = np.zeros(c)
        aff = one.copy()
        for j in range(hops):
            t = tris[:, j]
            edge = edge * self.edge_term[t]
            temp_sum = temp_sum + self.temp_term[t]
            prior_sum = prior_sum + self.prior_term[t]
            aff = aff * self.affinity_term[t]

        bsum = np.zeros(c)
        for j in range(hops + 1):
            bsum = bsum + self.bridge_term[ents[:, j]]
        bridge = (bsum / (hops + 1)) ** self.cfg.rho if self.has_metadata else one.copy()

        raw = self.raw_struct(ents)
        norm = self.struct_normalizer(raw) if normalizer is None else float(normalizer)
        struct = np.clip(raw / norm, 0.0, 1.0)

        factors = {
            "edge": edge,
            "struct": struct,
            "bridge": bridge,
            "affinity": aff,
            "prior": prior_sum / hops,
            "temp": temp_sum / hops,
        }
        for name in self.disabled:
            factors[name] = one.copy()
        compass = (
            factors["edge"] * factors["struct"] * factors["bridge"]
            * factors["affinity"] * factors["prior"] * factors["temp"]
        )
        return ScoredBatch(factors, compass, norm)


def path_arrays(g: GraphSnapshot, path: Path) -> tuple[np.ndarray, np.ndarray]:
    ents = np.array([[g.index_of(e) for e in path.entities]], np.int64)
    tris = np.array([list(path.triples)], np.int64)
    return ents, tris


def compass_score(
    g: GraphSnapshot,
    path: Path,
    model: Optional[NpllModel],
    ppr: PprVector,
    metadata: Optional[CommunityMetadata] = None,
    cfg: CompassConfig = CompassConfig(),
    struct_normalizer: Optional[float] = None,
    disabled: Iterable[str] = (),
) -> SignalBreakdown:
    """Breakdown for one path. Without an explicit normalizer the path is its
    own frontier (``frontier_max``) or the configured fixed value is used."""
    _require_hops(path)
    for t in path.triples:
        if not 0 <= t < g.total_triples:
            raise GraphError(f"not an observed edge: triple index {t}")
    scorer = CompassScorer(g, ppr, model, metadata, cfg, frozenset(disabled))
    ents, tris = path_arrays(g, path)
    return scorer.score(ents, tris, struct_normalizer).breakdown(0)
