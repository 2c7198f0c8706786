"""Rule-based plausibility model for observed edges.

Length-2 Horn rules ``r1(X, Y) & r2(Y, Z) => r3(X, Z)`` are mined with
support/confidence thresholds, their weights are fitted by EM against
object-corrupted negatives, and the model only ever scores triples that are
already in the graph. Only rules and relation biases are persisted; entity and
relation embeddings are rebuilt from the graph and the stored seed.
"""

from __future__ import annotations

import json
import logging
import weakref
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .store import GraphError, GraphSnapshot

log = logging.getLogger(__name__)

BLOB_FORMAT = "odin-npll"
BLOB_VERSION = 1
# Rule weights, biases and confidences live at half precision: full float32
# digits push a 50-rule JSON blob past 1 KiB.
_HALF_MAX = float(np.finfo(np.float16).max)


def _q(x: float) -> float:
    """Round to the nearest float16; the shortest repr of the result is what gets saved."""
    return float(np.float16(min(max(float(x), -_HALF_MAX), _HALF_MAX)))


def _short(x: float) -> float:
    # shortest decimal that reads back as the same float16
    return float(str(np.float16(_q(x))))


def _q_array(a: np.ndarray) -> np.ndarray:
    return np.clip(a, -_HALF_MAX, _HALF_MAX).astype(np.float16).astype(np.float64)
DEFAULT_KEY = "npll-weights"


class TrainingError(RuntimeError):
    pass


class WeightsError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    body: tuple[str, str]
    head: str
    support: int
    confidence: float
    weight: float = 0.0

    def __str__(self) -> str:
        r1, r2 = self.body
        return f"{r1}(X,Y) & {r2}(Y,Z) => {self.head}(X,Z)"


@dataclass(frozen=True)
class TrainConfig:
    min_support: int = 10
    min_confidence: float = 0.1
    negative_ratio: int = 5
    learning_rate: float = 0.05
    epochs: int = 10
    rng_seed: int = 0
    sample_size: int = 50_000
    max_rules: int = 50
    m_steps: int = 20
    embedding_dim: int = 16
    l2: float = 1e-3

    def __post_init__(self):
        if self.min_support < 1 or self.negative_ratio < 1 or self.epochs < 1:
            raise ValueError("min_support, negative_ratio and epochs must be positive")
        if not 0.0 < self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in (0, 1]")
        if self.learning_rate <= 0 or self.embedding_dim < 1 or self.m_steps < 1:
            raise ValueError("learning_rate, embedding_dim and m_steps must be positive")
        if self.sample_size < 0 or self.max_rules < 0:
            raise ValueError("sample_size and max_rules must be non-negative")


# ---------------------------------------------------------------------------
# Body groundings
# ---------------------------------------------------------------------------


class _Groundings:
    """Distinct ``(r1, r2, x, z)`` body groundings with their count of middles ``y``."""

    def __init__(self, g: GraphSnapshot):
        n, nr = g.num_entities, len(g.relations)
        if nr * nr * n * n >= 2**62:
            raise TrainingError("graph too large for packed grounding keys")
        self.n, self.nr = n, nr
        first, second = kernels.two_paths(g.indptr, g.obj)
        key = self.pack(g.rel[first], g.rel[second], g.subj[first], g.obj[second])
        self.keys, self.counts = np.unique(key, return_counts=True)

    def pack(self, r1, r2, x, z):
        r1, r2, x, z = (np.asarray(a, dtype=np.int64) for a in (r1, r2, x, z))
        return ((r1 * self.nr + r2) * self.n + x) * self.n + z

    def count(self, r1, r2, x, z) -> np.ndarray:
        if not len(self.keys):
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(z)).shape, np.int64)
        want = self.pack(r1, r2, x, z)
        pos = np.searchsorted(self.keys, want)
        pos = np.minimum(pos, len(self.keys) - 1)
        hit = self.keys[pos] == want
        return np.where(hit, self.counts[pos], 0)


_grounding_cache: "weakref.WeakKeyDictionary[GraphSnapshot, _Groundings]" = weakref.WeakKeyDictionary()


def _groundings(g: GraphSnapshot) -> _Groundings:
    gr = _grounding_cache.get(g)
    if gr is None:
        gr = _grounding_cache[g] = _Groundings(g)
    return gr


def mine_rules(g: GraphSnapshot, cfg: TrainConfig = TrainConfig()) -> list[Rule]:
    """Length-2 rules with support >= min_support and confidence >= min_confidence.

    Support counts distinct ``(X, Z)`` body groundings closed by the head;
    confidence divides by all distinct body groundings. Sorted by confidence
    (descending), then relation ids; at most ``cfg.max_rules`` are kept.
    """
    gr = _groundings(g)
    if not len(gr.keys):
        return []
    nn = gr.n * gr.n
    body = gr.keys // nn
    pair = gr.keys % nn
    body_ids, body_counts = np.unique(body, return_counts=True)

    tp = g.subj * gr.n + g.obj
    order = np.argsort(tp, kind="stable")
    tp_sorted = tp[order]
    lo = np.searchsorted(tp_sorted, pair, "left")
    hi = np.searchsorted(tp_sorted, pair, "right")
    cnt = hi - lo
    idx = np.repeat(lo, cnt) + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    heads = g.rel[order[idx]]
    rule_key = np.repeat(body, cnt) * gr.nr + heads
    rule_ids, support = np.unique(rule_key, return_counts=True)

    rules = []
    for rk, sup in zip(rule_ids, support):
        if sup < cfg.min_support:
            continue
        b, r3 = divmod(int(rk), gr.nr)
        total = int(body_counts[np.searchsorted(body_ids, b)])
        conf = _q(sup / total)
        if conf < cfg.min_confidence:
            continue
        r1, r2 = divmod(b, gr.nr)
        rules.append(
            Rule((g.relations[r1], g.relations[r2]), g.relations[r3], int(sup), conf)
        )
    rules.sort(key=lambda r: (-r.confidence, r.body, r.head))
    return rules[: cfg.max_rules]


# ---------------------------------------------------------------------------
# Embeddings (rebuilt from the graph, never stored)
# ---------------------------------------------------------------------------


def reconstruct_embeddings(g: GraphSnapshot, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random features smoothed over the undirected neighbourhood.

    Entity rows are unit length; each relation vector is the mean elementwise
    product of its endpoint embeddings scaled into [-1, 1], so the DistMult
    compatibility of any triple lies in [-1, 1].
    """
    rng = np.random.default_rng(seed)
    n = g.num_entities
    base = rng.standard_normal((n, dim))
    adj = sp.coo_matrix(
        (np.ones(2 * g.total_triples), (np.r_[g.subj, g.obj], np.r_[g.obj, g.subj])), shape=(n, n)
    ).tocsr()
    adj.data[:] = 1.0
    deg = np.maximum(np.asarray(adj.sum(axis=1)).ravel(), 1.0)
    ent = base + (adj @ base) / deg[:, None]
    ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)

    prod = ent[g.subj] * ent[g.obj]
    rel = np.zeros((len(g.relations), dim))
    np.add.at(rel, g.rel, prod)
    rel /= np.maximum(np.bincount(g.rel, minlength=len(g.relations)), 1)[:, None]
    scale = np.abs(rel).max(axis=1, keepdims=True)
    rel = np.divide(rel, scale, out=np.zeros_like(rel), where=scale > 0)
    return ent, rel


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class NpllModel:
    rules: list[Rule] = field(default_factory=list)
    relation_bias: dict[str, float] = field(default_factory=dict)
    embedding_dim: int = 16
    rng_seed: int = 0
    trained: bool = False
    epochs: int = 10
    gamma: float = 0.1
    loss_history: list[float] = field(default_factory=list)
    origin: str = "fallback"
    _emb: weakref.WeakKeyDictionary = field(
        default_factory=weakref.WeakKeyDictionary, repr=False
    )

    @classmethod
    def fallback(cls) -> "NpllModel":
        return cls(trained=False, origin="fallback")

    def embeddings(self, g: GraphSnapshot) -> tuple[np.ndarray, np.ndarray]:
        """Entity and relation embeddings for ``g``, rebuilt on first use."""
        cached = self._emb.get(g)
        if cached is None:
            cached = self._emb[g] = reconstruct_embeddings(g, self.embedding_dim, self.rng_seed)
        return cached

    def _rule_arrays(self, g: GraphSnapshot):
        ridx = g.relation_index
        keep = [
            r for r in self.rules
            if r.head in ridx and r.body[0] in ridx and r.body[1] in ridx
        ]
        r1 = np.array([ridx[r.body[0]] for r in keep], np.int64)
        r2 = np.array([ridx[r.body[1]] for r in keep], np.int64)
        r3 = np.array([ridx[r.head] for r in keep], np.int64)
        w = np.array([r.weight for r in keep], np.float64)
        return r1, r2, r3, w

    def rule_counts(self, g: GraphSnapshot, s, r, o) -> np.ndarray:
        """Grounding counts (number of middles) per rule for each triple; 0 where the head differs."""
        s, r, o = (np.atleast_1d(np.asarray(a, np.int64)) for a in (s, r, o))
        r1, r2, r3, _ = self._rule_arrays(g)
        out = np.zeros((len(s), len(r1)), np.int64)
        if not len(r1):
            return out
        gr = _groundings(g)
        for j in range(len(r1)):
            rows = np.flatnonzero(r == r3[j])
            if len(rows):
                out[rows, j] = gr.count(r1[j], r2[j], s[rows], o[rows])
        return out

    def compatibility(self, g: GraphSnapshot, s, r, o) -> np.ndarray:
        ent, rel = self.embeddings(g)
        return np.einsum("ij,ij,ij->i", ent[s], rel[r], ent[o])

    def logits(self, g: GraphSnapshot, s, r, o) -> np.ndarray:
        s, r, o = (np.atleast_1d(np.asarray(a, np.int64)) for a in (s, r, o))
        bias = np.array([self.relation_bias.get(name, 0.0) for name in g.relations])
        _, _, _, w = self._rule_arrays(g)
        fired = (self.rule_counts(g, s, r, o) > 0).astype(np.float64)
        z = bias[r] + fired @ w
        if self.gamma:
            z = z + self.gamma * self.compatibility(g, s, r, o)
        return z

    def score_unchecked(self, g: GraphSnapshot, s, r, o) -> np.ndarray:
        """Plausibility of arbitrary index triples. Only for evaluation and
        training; public scoring goes through :func:`score_edge`."""
        if not self.trained:
            return np.ones(len(np.atleast_1d(s)))
        return _sigmoid(self.logits(g, s, r, o))

    def edge_scores(self, g: GraphSnapshot) -> np.ndarray:
        """Plausibility of every observed triple, in triple-index order."""
        if not self.trained:
            return np.ones(g.total_triples)
        return _sigmoid(self.logits(g, g.subj, g.rel, g.obj))


def score_edge(m: NpllModel, g: GraphSnapshot, s: str, r: str, o: str) -> float:
    t = g.triple_index(s, r, o)
    if t is None:
        raise GraphError(f"not an observed edge: ({s!r}, {r!r}, {o!r})")
    if not m.trained:
        return 1.0
    return float(m.score_unchecked(g, g.subj[t], g.rel[t], g.obj[t])[0])


def edge_confidence(m: NpllModel, g: GraphSnapshot, path) -> float:
    """Product of the edge scores along ``path``; one implausible edge vetoes it."""
    conf = 1.0
    for s, r, o in path.edges(g):
        conf = conf * score_edge(m, g, s, r, o)
    return conf


# ---------------------------------------------------------------------------
# EM training
# ---------------------------------------------------------------------------

_train_calls = 0


def training_invocations() -> int:
    """Number of :func:`train_em` calls made in this process."""
    return _train_calls


def _training_sample(g: GraphSnapshot, cfg: TrainConfig, rng: np.random.Generator):
    m = g.total_triples
    k = min(cfg.sample_size, m)
    if k == 0:
        raise TrainingError("empty training sample")
    pos = np.sort(rng.choice(m, size=k, replace=False))
    s, r, o = g.subj[pos], g.rel[pos], g.obj[pos]
    ns, nr = np.repeat(s, cfg.negative_ratio), np.repeat(r, cfg.negative_ratio)
    no = rng.integers(0, g.num_entities, size=len(ns))
    # drop corruptions that happen to be observed triples
    n, R = g.num_entities, len(g.relations)
    observed = (g.subj * R + g.rel) * n + g.obj
    want = (ns * R + nr) * n + no
    pos_in = np.minimum(np.searchsorted(observed, want), len(observed) - 1)
    keep = observed[pos_in] != want
    ns, nr, no = ns[keep], nr[keep], no[keep]
    S = np.r_[s, ns]
    Rr = np.r_[r, nr]
    O = np.r_[o, no]
    y = np.r_[np.ones(k), np.zeros(len(ns))]
    wt = np.r_[np.ones(k), np.full(len(ns), 1.0 / cfg.negative_ratio)]
    return S, Rr, O, y, wt / wt.sum()


def train_em(g: GraphSnapshot, rules: list[Rule], cfg: TrainConfig = TrainConfig()) -> NpllModel:
    """Fit rule weights and relation biases by EM.

    E-step: responsibility of each fired rule for each positive triple,
    proportional to ``groundings * exp(weight)`` among rules sharing the head.
    M-step: preconditioned gradient descent with backtracking on the weighted
    logistic loss of observed triples vs. corrupted objects; rules carrying more
    expected responsibility take proportionally larger steps. The loss never
    increases from one epoch to the next.
    """
    global _train_calls
    _train_calls += 1

    rng = np.random.default_rng(cfg.rng_seed)
    model = NpllModel(
        rules=[replace(r, weight=0.0) for r in rules],
        relation_bias={name: 0.0 for name in g.relations},
        embedding_dim=cfg.embedding_dim,
        rng_seed=cfg.rng_seed,
        trained=True,
        epochs=cfg.epochs,
        origin="trained",
    )
    S, Rr, O, y, wt = _training_sample(g, cfg, rng)
    counts = model.rule_counts(g, S, Rr, O).astype(np.float64)
    fired = (counts > 0).astype(np.float64)
    compat = model.gamma * model.compatibility(g, S, Rr, O)
    nrel, nrule = len(g.relations), fired.shape[1]
    is_pos = y > 0

    def loss_of(w, b):
        z = b[Rr] + fired @ w + compat
        nll = np.where(is_pos, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))
        return float(wt @ nll + 0.5 * cfg.l2 * (w @ w + b @ b)), z

    w = np.zeros(nrule)
    b = np.zeros(nrel)
    loss, z = loss_of(w, b)
    if not np.isfinite(loss):
        raise TrainingError("non-finite initial loss")

    for _ in range(cfg.epochs):
        # E-step
        if nrule:
            act = counts[is_pos] * np.exp(w)[None, :]
            tot = act.sum(axis=1, keepdims=True)
            resp = np.divide(act, tot, out=np.zeros_like(act), where=tot > 0)
            expected = resp.sum(axis=0)
            share = expected / expected.sum() if expected.sum() > 0 else np.zeros(nrule)
            precond = 1.0 + nrule * share
        else:
            precond = np.ones(0)
        # M-step
        for _ in range(cfg.m_steps):
            d = wt * (_sigmoid(z) - y)
            gw = fired.T @ d + cfg.l2 * w
            gb = np.bincount(Rr, weights=d, minlength=nrel) + cfg.l2 * b
            step = cfg.learning_rate
            for _ in range(40):
                w_new = w - step * precond * gw
                b_new = b - step * gb
                new_loss, new_z = loss_of(w_new, b_new)
                if not np.isfinite(new_loss):
                    raise TrainingError("non-finite loss during M-step")
                if new_loss <= loss:
                    w, b, loss, z = w_new, b_new, new_loss, new_z
                    break
                step *= 0.5
        model.loss_history.append(loss)

    # held at persisted precision so a saved blob reloads bit-exactly
    w = _q_array(w)
    b = _q_array(b)
    if not (np.isfinite(w).all() and np.isfinite(b).all()):
        raise TrainingError("non-finite parameters")
    model.rules = [replace(r, weight=float(wi)) for r, wi in zip(model.rules, w)]
    model.relation_bias = {name: float(bi) for name, bi in zip(g.relations, b)}
    return model


# ---------------------------------------------------------------------------
# Weights-only persistence
# ---------------------------------------------------------------------------




def save_weights(m: NpllModel) -> bytes:
    """Compact JSON document (zlib-compressed) holding rules, weights and biases."""
    if not m.trained:
        raise WeightsError("fallback model has no weights to save")
    doc = {
        "format": BLOB_FORMAT,
        "version": BLOB_VERSION,
        "rng_seed": int(m.rng_seed),
        "embedding_dim": int(m.embedding_dim),
        "relation_bias": {k: _short(v) for k, v in sorted(m.relation_bias.items())},
        "rules": [
            {
                "body": list(r.body),
                "head": r.head,
                "weight": _short(r.weight),
                "support": r.support,
                "confidence": _short(r.confidence),
            }
            for r in m.rules
        ],
    }
    text = json.dumps(doc, separators=(",", ":"), ensure_ascii=False)
    return zlib.compress(text.encode("utf-8"), 9)


def _from_json_number(x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise WeightsError(f"expected a number, got {x!r}")
    return _q(x)


def load_weights(blob: bytes, g: Optional[GraphSnapshot] = None) -> NpllModel:
    """Inverse of :func:`save_weights`. Embeddings are rebuilt lazily on first use.

    Plain (uncompressed) JSON documents are accepted too.
    """
    try:
        try:
            text = zlib.decompress(blob).decode("utf-8")
        except zlib.error:
            text = blob.decode("utf-8")
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise WeightsError(f"corrupt weight blob: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != BLOB_FORMAT:
        raise WeightsError("not an odin-npll weight blob")
    if doc.get("version") != BLOB_VERSION:
        raise WeightsError(f"unsupported weight blob version {doc.get('version')!r}")
    try:
        rules = [
            Rule(
                (str(d["body"][0]), str(d["body"][1])),
                str(d["head"]),
                int(d["support"]),
                _from_json_number(d["confidence"]),
                _from_json_number(d["weight"]),
            )
            for d in doc["rules"]
        ]
        bias = {str(k): _from_json_number(v) for k, v in doc["relation_bias"].items()}
        seed = int(doc["rng_seed"])
        dim = int(doc["embedding_dim"])
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise WeightsError(f"corrupt weight blob: {exc!r}") from None
    if dim < 1:
        raise WeightsError("embedding_dim must be positive")
    return NpllModel(
        rules=rules, relation_bias=bias, embedding_dim=dim, rng_seed=seed,
        trained=True, origin="loaded",
    )


# ---------------------------------------------------------------------------
# Lifecycle
# ---------------------------------------------------------------------------


class MemoryStore:
    def __init__(self):
        self.blobs: dict[str, bytes] = {}

    def get(self, key: str) -> Optional[bytes]:
        return self.blobs.get(key)

    def put(self, key: str, blob: bytes) -> None:
        self.blobs[key] = blob


class FileStore:
    """One file per key under ``root``."""

    def __init__(self, root):
        self.root = FsPath(root)

    def path_for(self, key: str) -> FsPath:
        return self.root / key

    def get(self, key: str) -> Optional[bytes]:
        p = self.path_for(key)
        return p.read_bytes() if p.exists() else None

    def put(self, key: str, blob: bytes) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.path_for(key + ".tmp")
        tmp.write_bytes(blob)
        tmp.replace(self.path_for(key))


def ensure_model(
    store,
    g: GraphSnapshot,
    cfg: TrainConfig = TrainConfig(),
    key: str = DEFAULT_KEY,
    miner: Callable = mine_rules,
    trainer: Callable = train_em,
) -> NpllModel:
    """Load the stored model, or mine + train + persist one; never raises.

    Any failure along the way yields the fallback model (every edge scores 1).
    """
    try:
        blob = store.get(key)
    except Exception as exc:  # noqa: BLE001 - storage backends raise anything
        log.warning("weight store unreadable (%s); retraining", exc)
        blob = None
    if blob is not None:
        try:
            return load_weights(blob, g)
        except WeightsError as exc:
            log.warning("stored weights unusable (%s); retraining", exc)
    try:
        rules = miner(g, cfg)
        model = trainer(g, rules, cfg)
    except Exception as exc:  # noqa: BLE001
        log.warning("NPLL training failed (%s); edge plausibility disabled", exc)
        return NpllModel.fallback()
    try:
        store.put(key, save_weights(model))
    except Exception as exc:  # noqa: BLE001
        log.warning("could not persist weights (%s)", exc)
    return model
