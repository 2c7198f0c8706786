"""Command-line interface: ``odin-kg <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath
from typing import Optional, Sequence

from . import __version__
from .community import build_metadata, save_metadata
from .compass import SIGNALS, CompassScorer, SignalBreakdown, narrate
from .engine import ConfigError, RunConfig, build_pipeline, input_digests, load_config, run_discover
from .evaluation import OracleGuardError, compare_methods, recall_curve, recall_table, run_ablation
from .npll import FileStore, TrainingError, WeightsError, ensure_model
from .paths import PathError
from .ppr import PprError, ppr_local_push
from .search import SearchError
from .store import GraphError, GraphSnapshot, IngestError, load
from .synthetic import SyntheticSpec, generate

EXIT_ERROR = 1


class CliError(Exception):
    pass


def _read_graph(path: str) -> GraphSnapshot:
    if not FsPath(path).exists():
        raise CliError(f"file not found: {path}")
    try:
        return load(path)
    except IngestError as exc:
        raise CliError(f"{path}: {exc}") from None


def _emit(doc: dict, out: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if out:
        FsPath(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _manifest(command: str, rc: RunConfig, inputs: Sequence) -> dict:
    return {
        "tool": "odin-kg",
        "version": __version__,
        "command": command,
        "run_config": rc.to_json(),
        "inputs": input_digests([p for p in inputs if p]),
    }


def _run_config(args, **base) -> RunConfig:
    overrides = load_config(args.config) if getattr(args, "config", None) else {}
    overrides.update(base)
    for name, attr in (
        ("hops", "hops"), ("beam_width", "beam"), ("top_k", "top"), ("lambda_decay", "lam"),
        ("rng_seed", "seed"), ("metadata", "metadata"), ("model", "model"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "allow_revisit", False):
        overrides["allow_revisit"] = True
    disabled = set(overrides.get("disabled", ()))
    for flag, signals in (("no_npll", {"edge"}), ("no_temporal", {"temp"}), ("no_bridge", {"bridge", "affinity"})):
        if getattr(args, flag, False):
            disabled |= signals
    overrides["disabled"] = tuple(disabled)
    return RunConfig(**overrides)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    g = _read_graph(args.triples)
    g.save(args.out)
    print(json.dumps({
        "entities": g.num_entities, "triples": g.total_triples, "relations": len(g.relations),
        "snapshot": args.out,
    }))
    return 0


def cmd_communities(args) -> int:
    g = _read_graph(args.snapshot)
    meta = build_metadata(g, args.detector, args.seed)
    save_metadata(meta, args.out)
    print(json.dumps({
        "communities": meta.num_communities, "bridges": len(meta.bridges),
        "affinity_pairs": len(meta.affinity), "out": args.out,
    }))
    return 0


def cmd_train(args) -> int:
    g = _read_graph(args.snapshot)
    rc = _run_config(args, snapshot=args.snapshot)
    path = FsPath(args.model)
    model = ensure_model(FileStore(path.parent), g, rc.train(), key=path.name)
    size = path.stat().st_size if path.exists() and model.trained else 0
    print(json.dumps({
        "rules": len(model.rules), "blob_bytes": size, "fallback": not model.trained,
        "origin": model.origin, "model": str(path),
    }))
    return 0


def render_text(report_doc: dict) -> str:
    lines = []
    for row in report_doc["report"]["results"]:
        chain = row["entities"][0] + "".join(
            f" -[{e['r']}]-> {e['o']}" for e in row["edges"]
        )
        lines.append(f"#{row['rank']}  compass={row['compass']:.6g}  hop={row['hop']}  {chain}")
        for e in row["edges"]:
            lines.append(f"      {e['s']} {e['r']} {e['o']}  t={e['t']}  prov={','.join(e['prov']) or '-'}")
        if row["shapley"] is None:
            lines.append(f"      veto: {', '.join(row['veto'])}")
        else:
            lines.append("      phi: " + "  ".join(f"{k}={v:+.4f}" for k, v in row["shapley"].items()))
    if not lines:
        lines.append("no paths found")
    return "\n".join(lines)


def cmd_discover(args) -> int:
    g = _read_graph(args.snapshot)
    rc = _run_config(args, snapshot=args.snapshot, seeds=tuple(args.seeds))
    report, pipe = run_discover(g, rc)
    doc = _manifest("discover", rc, [args.snapshot, rc.metadata, rc.model, args.config])
    doc["notes"] = pipe.notes
    doc["report"] = report.to_json(g, include_timing=args.timing)
    _emit(doc, args.out)
    if args.out:
        print(render_text(doc))
    return 0


def _load_report(path: str) -> dict:
    if not FsPath(path).exists():
        raise CliError(f"file not found: {path}")
    try:
        doc = json.loads(FsPath(path).read_text("utf-8"))
        return doc["report"] if "report" in doc else doc
    except (json.JSONDecodeError, TypeError) as exc:
        raise CliError(f"{path}: not a discover report ({exc})") from None


def cmd_explain(args) -> int:
    rep = _load_report(args.report)
    rows = rep.get("results", []) if isinstance(rep, dict) else []
    match = [r for r in rows if r.get("rank") == args.rank]
    if not match:
        raise CliError(f"{args.report}: no path with rank {args.rank} (report has {len(rows)})")
    row = match[0]
    try:
        b = SignalBreakdown(*(float(row["factors"][s]) for s in SIGNALS))
    except (KeyError, TypeError, ValueError):
        raise CliError(f"{args.report}: rank {args.rank} has no complete factor breakdown") from None
    chain = " -> ".join(row.get("entities", []))
    print(chain)
    print(narrate(b, args.rank))
    return 0


def _eval_source(path: str):
    """A synthetic spec (JSON object of SyntheticSpec fields) or a triples/snapshot file."""
    p = FsPath(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    text = p.read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and not {"s", "r", "o", "format"} & doc.keys():
        try:
            for key in ("planted_rule", "timestamp_range"):
                if doc.get(key) is not None:
                    doc[key] = tuple(doc[key])
            spec = SyntheticSpec(**doc)
        except TypeError as exc:
            raise CliError(f"{path}: bad synthetic spec ({exc})") from None
        return spec, generate(spec)[0]
    return None, _read_graph(path)


def cmd_eval(args) -> int:
    spec, g = _eval_source(args.source)
    seeds = tuple(args.seeds) if args.seeds else (g.entities[0],)
    rc = _run_config(args, snapshot=args.source, seeds=seeds)
    doc = _manifest("eval", rc, [args.source, rc.metadata, rc.model, args.config])
    pipe = build_pipeline(g, rc)
    cfg = rc.search()
    sections = {}
    texts = []
    want_all = not (args.ablation or args.compare or args.recall)
    if args.compare or want_all:
        rep = compare_methods(g, cfg, pipe.scorer, args.walks, rc.rng_seed)
        sections["compare"] = rep.to_json(args.timing)
        texts.append(rep.to_table(args.timing))
    if args.ablation or want_all:
        rep = run_ablation(g, cfg, pipe.scorer)
        sections["ablation"] = rep.to_json(args.timing)
        texts.append(rep.to_table(args.timing))
    if args.recall:
        if spec is not None:
            family = []
            for i in range(args.graphs):
                gi = generate(SyntheticSpec(**{**spec.__dict__, "rng_seed": spec.rng_seed + i}))[0]
                family.append((gi, [gi.entities[0]]))
        else:
            family = [(g, list(seeds))]
        comp = rc.compass()

        def factory(gi, s):
            return CompassScorer(gi, ppr_local_push(gi, s, rc.ppr()), cfg=comp)

        widths = [int(x) for x in args.b_values.split(",")]
        pts = recall_curve(family, widths, rc.hops, rc.top_k, factory, rc.allow_revisit)
        sections["recall"] = [p.__dict__ for p in pts]
        texts.append(recall_table(pts, rc.top_k))
    doc["notes"] = pipe.notes
    doc["eval"] = sections
    _emit(doc, args.out)
    if args.out:
        print("\n\n".join(texts))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hops", type=int, help="hop limit h (default 3)")
    p.add_argument("--beam", type=int, help="beam width b (default 64)")
    p.add_argument("--top", type=int, help="results kept k (default 50)")
    p.add_argument("--lambda", dest="lam", type=float, help="temporal decay rate per second")
    p.add_argument("--no-bridge", action="store_true", help="force bridge and affinity to 1")
    p.add_argument("--no-npll", action="store_true", help="force edge plausibility to 1")
    p.add_argument("--no-temporal", action="store_true", help="force recency to 1")
    p.add_argument("--allow-revisit", action="store_true", help="allow non-simple paths")
    p.add_argument("--seed", type=int, help="rng seed for training and detection")
    p.add_argument("--metadata", help="community metadata directory")
    p.add_argument("--model", help="NPLL weight blob path (trained and written if missing)")
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--timing", action="store_true", help="include wall-clock times in the JSON")
    p.add_argument("-o", "--out", help="write JSON here and print a text summary")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odin-kg", description="Seed-driven path discovery over a knowledge graph.")
    ap.add_argument("--version", action="version", version=f"odin-kg {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate triples and write a snapshot")
    p.add_argument("triples")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("communities", help="write community, bridge and affinity tables")
    p.add_argument("snapshot")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--detector", default="greedy", choices=["greedy", "louvain", "components"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("train", help="load or train NPLL weights")
    p.add_argument("snapshot")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("discover", help="rank paths from seed entities")
    p.add_argument("snapshot")
    p.add_argument("seeds", nargs="+")
    _search_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("explain", help="narrate one ranked path of a report")
    p.add_argument("report")
    p.add_argument("--rank", type=int, default=1)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="oracle, baselines, ablation and recall harness")
    p.add_argument("source", help="triples/snapshot file or synthetic spec JSON")
    p.add_argument("--seeds", nargs="+")
    p.add_argument("--ablation", action="store_true")
    p.add_argument("--compare", action="store_true")
    p.add_argument("--recall", action="store_true")
    p.add_argument("--graphs", type=int, default=20, help="family size for --recall on a spec")
    p.add_argument("--b-values", default="1,2,4,8,16,32")
    p.add_argument("--walks", type=int, default=1000)
    _search_flags(p)
    p.set_defaults(func=cmd_eval)
    return ap


HANDLED = (
    CliError, ConfigError, IngestError, GraphError, SearchError, PathError, PprError,
    OracleGuardError, TrainingError, WeightsError, ValueError, OSError,
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HANDLED as exc:
        msg = " ".join(str(exc).split())
        print(f"odin-kg: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
