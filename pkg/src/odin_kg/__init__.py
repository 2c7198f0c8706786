"""Seed-driven multi-hop path discovery over knowledge graphs."""

__version__ = "0.1.0"

from .community import CommunityMetadata, build_metadata, load_metadata, save_metadata
from .compass import CompassConfig, CompassScorer, SignalBreakdown, VetoError, compass_score, explain
from .npll import NpllModel, TrainConfig, ensure_model, load_weights, save_weights
from .paths import Path
from .ppr import PprConfig, PprVector, ppr_exact, ppr_local_push
from .search import ScoredPath, SearchConfig, SearchReport, discover, score_neighbors
from .store import GraphSnapshot, Triple, ingest, load

__all__ = [
    "CommunityMetadata", "CompassConfig", "CompassScorer", "GraphSnapshot", "NpllModel", "Path",
    "PprConfig", "PprVector", "ScoredPath", "SearchConfig", "SearchReport", "SignalBreakdown",
    "TrainConfig", "Triple", "VetoError", "build_metadata", "compass_score", "discover",
    "ensure_model", "explain", "ingest", "load", "load_metadata", "load_weights",
    "ppr_exact", "ppr_local_push", "save_metadata", "save_weights", "score_neighbors",
]
