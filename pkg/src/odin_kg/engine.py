"""Run configuration and the end-to-end discovery pipeline."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Optional, Sequence

from .community import CommunityMetadata, build_metadata, try_load_metadata
from .compass import SIGNALS, CompassConfig, CompassScorer
from .npll import FileStore, MemoryStore, NpllModel, TrainConfig, ensure_model
from .ppr import PprConfig, ppr_local_push
from .search import SearchConfig, SearchReport, discover
from .store import GraphSnapshot


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every knob of a run; serialized verbatim into each output manifest."""

    snapshot: Optional[str] = None
    metadata: Optional[str] = None
    model: Optional[str] = None
    seeds: tuple[str, ...] = ()
    # search
    hops: int = 3
    beam_width: int = 64
    top_k: int = 50
    allow_revisit: bool = False
    # compass
    lambda_decay: float = CompassConfig.lambda_decay
    t_now: Optional[int] = None
    beta_bridge: float = 0.5
    rho: float = 0.5
    beta_affinity: float = 0.5
    prior_mode: str = "frequency"
    struct_normalizer_mode: str = "frontier_max"
    struct_normalizer_value: float = 1.0
    disabled: tuple[str, ...] = ()
    # ppr
    alpha: float = 0.15
    epsilon: float = 1e-4
    symmetrize: bool = False
    # npll
    min_support: int = 10
    min_confidence: float = 0.1
    negative_ratio: int = 5
    learning_rate: float = 0.05
    epochs: int = 10
    sample_size: int = 50_000
    max_rules: int = 50
    m_steps: int = 20
    embedding_dim: int = 16
    l2: float = 1e-3
    # communities
    detector: str = "greedy"
    rng_seed: int = 0

    def __post_init__(self):
        self.seeds = tuple(sorted(set(self.seeds)))
        self.disabled = tuple(sorted(set(self.disabled)))
        bad = set(self.disabled) - set(SIGNALS)
        if bad:
            raise ConfigError(f"unknown signals in disabled: {sorted(bad)}")

    def search(self) -> SearchConfig:
        return SearchConfig(self.seeds, self.hops, self.beam_width, self.top_k, self.allow_revisit)

    def compass(self) -> CompassConfig:
        return CompassConfig(
            self.lambda_decay, self.t_now, self.beta_bridge, self.rho, self.beta_affinity,
            self.prior_mode, self.struct_normalizer_mode, self.struct_normalizer_value,
        )

    def ppr(self) -> PprConfig:
        return PprConfig(self.alpha, self.epsilon, self.symmetrize)

    def train(self) -> TrainConfig:
        return TrainConfig(
            min_support=self.min_support, min_confidence=self.min_confidence,
            negative_ratio=self.negative_ratio, learning_rate=self.learning_rate,
            epochs=self.epochs, rng_seed=self.rng_seed, sample_size=self.sample_size,
            max_rules=self.max_rules, m_steps=self.m_steps, embedding_dim=self.embedding_dim,
            l2=self.l2,
        )

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        out["disabled"] = list(self.disabled)
        return out

    def updated(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_DEFAULTS = RunConfig()


def _coerce(name: str, raw: str):
    default = getattr(_DEFAULTS, name)
    raw = raw.strip()
    if name in ("seeds", "disabled"):
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if raw.lower() in ("none", "null", ""):
        if default is None:
            return None
        raise ConfigError(f"{name}: a value is required")
    try:
        if name == "t_now" or isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "config") -> dict:
    """``key = value`` lines; ``#`` starts a comment. Returns typed overrides."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected key=value")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.split(".")[-1]  # allow section prefixes like search.beam_width
        if key not in _FIELDS:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path) -> dict:
    p = FsPath(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text("utf-8"), p.name)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def input_digests(paths: Sequence) -> dict[str, str]:
    out = {}
    for p in paths:
        p = FsPath(p)
        if p.is_dir():
            for child in sorted(p.iterdir()):
                if child.is_file():
                    out[str(child)] = sha256_file(child)
        elif p.exists():
            out[str(p)] = sha256_file(p)
    return out


@dataclass
class Pipeline:
    g: GraphSnapshot
    scorer: CompassScorer
    model: NpllModel
    metadata: Optional[CommunityMetadata]
    notes: list[str] = field(default_factory=list)


def build_pipeline(g: GraphSnapshot, rc: RunConfig) -> Pipeline:
    """PPR from the seeds, NPLL model and community metadata wired into a scorer.

    Model and metadata are read from their paths when given, otherwise built
    in memory. Disabled signals skip their offline stage entirely.
    """
    notes = []
    off = set(rc.disabled)
    if "edge" in off:
        model = NpllModel.fallback()
    else:
        store = FileStore(FsPath(rc.model).parent) if rc.model else MemoryStore()
        key = FsPath(rc.model).name if rc.model else "npll-weights"
        model = ensure_model(store, g, rc.train(), key=key)
        if not model.trained:
            notes.append("NPLL unavailable: edge plausibility forced to 1")
    if off >= {"bridge", "affinity"}:
        meta = None
    elif rc.metadata:
        meta = try_load_metadata(rc.metadata)
        if meta is None:
            notes.append("community metadata unavailable: bridge and affinity forced to 1")
    else:
        meta = build_metadata(g, rc.detector, rc.rng_seed)
    ppr = ppr_local_push(g, rc.seeds, rc.ppr())
    scorer = CompassScorer(g, ppr, model, meta, rc.compass(), frozenset(off))
    return Pipeline(g, scorer, model, meta, notes)


def run_discover(g: GraphSnapshot, rc: RunConfig) -> tuple[SearchReport, Pipeline]:
    cfg = rc.search()
    pipe = build_pipeline(g, rc)
    return discover(g, cfg, pipe.scorer), pipe
