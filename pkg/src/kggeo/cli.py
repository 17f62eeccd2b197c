"""``kggeo`` command line.

Every subcommand prints one JSON summary on stdout (validated against the
shipped schema) and writes its artifacts to the paths given. Settings come
from ``--config file.toml`` with command-line flags taking precedence; the
defaults reproduce the best configuration reported for the method
(topological-spe expansion, L = 14, GBDT, T = 50 km).

Exit codes: 0 success, 2 missing input path, 3 malformed input, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import jsonschema

from . import __version__
from .annotator import build_lexicon, group_by_document, load_annotations
from .embeddings import load_embeddings
from .evaluation import DatasetSplit, evaluate, stratified_split
from .expansion import CacheError, ExpansionConfig, ExpansionTable, Strategy, precompute_expansions
from .features import HashedContextEncoder, PrecomputedContextVectors, load_anchor_vectors, load_tags
from .kg import SnapshotFormatError, load_knowledge_graph, write_knowledge_graph
from .pipeline import (FeatureInputs, build_instances, build_validation_set, geoparse, load_dataset,
                       load_predictions, strategy_report, write_dataset, write_predictions)
from .selection import (Algorithm, Hyperparameters, SelectionModel, calibrate_threshold, f1_at,
                        feature_importance, random_search, score_documents, train)

log = logging.getLogger("kggeo")

EXIT_MISSING, EXIT_SCHEMA, EXIT_INTERNAL = 2, 3, 4


class MissingPathError(FileNotFoundError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """All knobs of a run; unset values fall back to the defaults below."""

    kg: Optional[str] = None
    geo_predicates: Optional[str] = None
    embeddings: Optional[str] = None
    tags: Optional[str] = None
    anchor_vectors: Optional[str] = None
    mention_vectors: Optional[str] = None
    context: str = "hashed"
    dataset: Optional[str] = None
    annotations: Optional[str] = None
    aliases: Optional[str] = None
    cache: Optional[str] = None
    model: Optional[str] = None
    predictions: Optional[str] = None
    out: Optional[str] = None
    strategy: str = Strategy.TOPOLOGICAL_SPE.value
    strategies: List[str] = field(default_factory=lambda: [s.value for s in Strategy])
    L: int = 14
    L_range: List[int] = field(default_factory=lambda: list(range(0, 51)))
    max_hops: int = 6
    algorithm: str = Algorithm.GBDT.value
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    search_iter: int = 0
    search_folds: int = 3
    threshold_T: float = 50.0
    granularity: bool = False
    vertical: bool = False
    split: Optional[str] = None  # each command has its own default split
    group: bool = False
    normalize: bool = False
    n_documents: int = 300
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        if not self.threshold_T > 0:
            raise ConfigError("threshold_T must be positive")
        if self.L < 0 or any(x < 0 for x in self.L_range):
            raise ConfigError("L must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.split not in (None, "all", "train", "validation", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.context not in ("hashed", "none", "precomputed"):
            raise ConfigError(f"unknown context mode {self.context!r}")
        try:
            Strategy(self.strategy)
            [Strategy(s) for s in self.strategies]
            Algorithm(self.algorithm)
            Hyperparameters.from_mapping(self.hyperparameters)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_PATH_FIELDS = ("kg", "geo_predicates", "embeddings", "tags", "anchor_vectors", "mention_vectors", "dataset",
                "annotations", "aliases", "cache", "model", "predictions")


def _parse_L_range(text: str) -> List[int]:
    """``"0:50"`` (inclusive range) or ``"0,1,2,5"``."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def load_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise MissingPathError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat: Dict[str, Any] = {}
    for k, v in raw.items():
        if isinstance(v, dict) and k != "hyperparameters":
            flat.update(v)  # sections ([paths], [expansion], ...) are only for readability
        else:
            flat[k] = v
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"{path}: unknown settings {sorted(unknown)}")
    return flat


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config)
    for name in RunConfig.__dataclass_fields__:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if isinstance(values.get("L_range"), str):
        values["L_range"] = _parse_L_range(values["L_range"])
    if isinstance(values.get("strategies"), str):
        values["strategies"] = [s.strip() for s in values["strategies"].split(",") if s.strip()]
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def _need(cfg: RunConfig, *names: str) -> None:
    for n in names:
        v = getattr(cfg, n)
        if v is None:
            raise MissingPathError(f"--{n.replace('_', '-')} is required")
        if not Path(v).exists():
            raise MissingPathError(f"{n.replace('_', '-')} path not found: {v}")


def _check_optional(cfg: RunConfig) -> None:
    for n in _PATH_FIELDS:
        v = getattr(cfg, n)
        if v is not None and n not in ("model", "cache", "predictions") and not Path(v).exists():
            raise MissingPathError(f"{n.replace('_', '-')} path not found: {v}")


# --------------------------------------------------------------------------
# shared loading


def _kg(cfg):
    _need(cfg, "kg")
    return load_knowledge_graph(cfg.kg, cfg.geo_predicates)


def _documents(cfg, default_split: str = "all"):
    _need(cfg, "dataset")
    docs = load_dataset(cfg.dataset)
    name = cfg.split or default_split
    if name == "all":
        return docs
    split: DatasetSplit = stratified_split(docs, seed=cfg.seed)
    keep = set(getattr(split, name))
    return [d for d in docs if d.id in keep]


def _annotation_source(cfg, kg, documents):
    if cfg.annotations is not None:
        _need(cfg, "annotations")
        return group_by_document(load_annotations(cfg.annotations, documents))
    return build_lexicon(kg, cfg.aliases)


def _inputs(cfg) -> FeatureInputs:
    emb = load_embeddings(cfg.embeddings) if cfg.embeddings else None
    tags = load_tags(cfg.tags) if cfg.tags else None
    ctx = None
    if cfg.anchor_vectors or cfg.context == "precomputed":
        _need(cfg, "anchor_vectors")
        mentions = load_embeddings(cfg.mention_vectors) if cfg.mention_vectors else None
        ctx = PrecomputedContextVectors(load_anchor_vectors(cfg.anchor_vectors), mentions)
    elif cfg.context == "hashed":
        ctx = HashedContextEncoder()
    return FeatureInputs(emb, tags, ctx)


def _table(cfg, kg) -> ExpansionTable:
    _need(cfg, "cache")
    table = ExpansionTable.load(cfg.cache, kg)
    if table.size_L < cfg.L:
        raise ConfigError(f"cache holds L={table.size_L}, but L={cfg.L} was requested")
    return table


def _out(cfg, default: Optional[str] = None) -> str:
    path = cfg.out or default
    if path is None:
        raise MissingPathError("--out is required")
    return path


# --------------------------------------------------------------------------
# commands


def cmd_ingest(cfg):
    kg = _kg(cfg)
    outputs = {}
    if cfg.out:
        write_knowledge_graph(kg, cfg.out)
        outputs["kg"] = cfg.out
    n_edges = sum(len(v) for v in kg.adjacency.values()) // 2
    return outputs, {"entities": len(kg), "geo_entities": len(kg.geo_index), "edges": n_edges,
                     "rejected_coordinates": kg.geo_warnings, "checksum": kg.checksum()}


def cmd_precompute(cfg):
    kg = _kg(cfg)
    out = cfg.cache or _out(cfg)
    emb = load_embeddings(cfg.embeddings) if cfg.embeddings else None
    table = precompute_expansions(kg, ExpansionConfig(Strategy(cfg.strategy), cfg.L, cfg.max_hops), emb,
                                  cfg.threads, out)
    sizes = [len(v) for v in table.entries.values()]
    return {"cache": out}, {"strategy": cfg.strategy, "L": cfg.L, "max_hops": cfg.max_hops, "entries": len(table),
                            "mean_candidates": sum(sizes) / len(sizes) if sizes else 0.0,
                            "kg_checksum": table.kg_checksum}


def cmd_train(cfg):
    kg = _kg(cfg)
    docs = _documents(cfg, "train")
    ann = _annotation_source(cfg, kg, docs)
    table = _table(cfg, kg)
    inputs = _inputs(cfg)
    instances = build_instances(docs, ann, kg, table, cfg.L, cfg.threshold_T, inputs, cfg.vertical)
    if not instances:
        raise ConfigError("no training instances: no annotation produced any candidate")
    algo = Algorithm(cfg.algorithm)
    hp = Hyperparameters.from_mapping(cfg.hyperparameters)
    if cfg.search_iter > 0:
        hp = random_search(instances, None, algo, None, cfg.search_iter, cfg.search_folds, cfg.seed)
    model = SelectionModel(train(instances, algo, hp, cfg.seed))
    out = cfg.model or _out(cfg)
    model.save(out)
    return {"model": out}, {"algorithm": algo.value, "instances": len(instances), "documents": len(docs),
                            "trees": len(model.ensemble.trees), "hyperparameters": hp.__dict__}


def _validation(cfg, kg, default_split):
    docs = _documents(cfg, default_split)
    ann = _annotation_source(cfg, kg, docs)
    table = _table(cfg, kg)
    return docs, build_validation_set(docs, ann, kg, table, cfg.L, _inputs(cfg), cfg.vertical)


def cmd_calibrate(cfg):
    kg = _kg(cfg)
    _need(cfg, "model")
    model = SelectionModel.load(cfg.model)
    docs, val = _validation(cfg, kg, "validation")
    if not val:
        raise ConfigError("empty validation split")
    c_th = calibrate_threshold(model, val, cfg.threshold_T)
    f1 = f1_at(score_documents(model, val), c_th, cfg.threshold_T)
    out = cfg.out or cfg.model
    model.with_threshold(c_th).save(out)
    return {"model": out}, {"c_th": c_th, "validation_f1": f1, "documents": len(docs)}


def cmd_geoparse(cfg):
    kg = _kg(cfg)
    _need(cfg, "model")
    model = SelectionModel.load(cfg.model)
    docs = _documents(cfg)
    ann = _annotation_source(cfg, kg, docs)
    table = _table(cfg, kg)
    inputs = _inputs(cfg)
    preds = []
    for d in docs:
        preds.extend(geoparse(d, kg, ann, table, model, inputs, cfg.L, cfg.vertical))
    out = cfg.predictions or _out(cfg)
    write_predictions(preds, out)
    return {"predictions": out}, {"documents": len(docs), "predictions": len(preds), "L": cfg.L}


def cmd_evaluate(cfg):
    docs = _documents(cfg)
    _need(cfg, "predictions")
    preds = load_predictions(cfg.predictions)
    keep = {d.id for d in docs}
    if (cfg.split or "all") == "all":
        unknown = sorted(set(preds) - keep)
        if unknown:
            raise ConfigError(f"predictions for documents not in the dataset: {unknown[:5]}")
    preds = {k: v for k, v in preds.items() if k in keep}
    kg = _kg(cfg) if cfg.kg else None
    truths = {d.id: d.ground_truth for d in docs}
    report = evaluate(preds, truths, cfg.threshold_T, cfg.granularity, kg)
    outputs = {}
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        outputs["report"] = cfg.out
    return outputs, report.to_dict()


def cmd_strategy_report(cfg):
    kg = _kg(cfg)
    docs = _documents(cfg)
    ann = _annotation_source(cfg, kg, docs)
    emb = load_embeddings(cfg.embeddings) if cfg.embeddings else None
    strategies = [Strategy(s) for s in cfg.strategies]
    if emb is None:
        strategies = [s for s in strategies if s not in (Strategy.LATENT, Strategy.TOPOLOGICAL_LAT)] or strategies
    report = strategy_report(kg, docs, ann, strategies, cfg.L_range, cfg.threshold_T, emb, cfg.max_hops, cfg.threads)
    outputs = {}
    if cfg.out:
        Path(cfg.out).write_text(report.to_csv(), encoding="utf-8")
        outputs["csv"] = cfg.out
    return outputs, report.to_dict()


def cmd_feature_importance(cfg):
    _need(cfg, "model")
    model = SelectionModel.load(cfg.model)
    gains = feature_importance(model, cfg.normalize, cfg.group or cfg.normalize)
    return {}, {"normalized": cfg.normalize, "by_group": cfg.group or cfg.normalize,
                "importance": dict(sorted(gains.items(), key=lambda kv: (-kv[1], kv[0])))}


def cmd_synth(cfg):
    from .synthetic import generate_corpus
    out = Path(_out(cfg))
    out.mkdir(parents=True, exist_ok=True)
    corpus = generate_corpus(cfg.seed, cfg.n_documents)
    write_knowledge_graph(corpus.kg, out / "gazetteer.kg")
    write_dataset(corpus.documents, out / "dataset.jsonl")
    with open(out / "aliases.tsv", "w", encoding="utf-8") as fh:
        for form, iri, count in corpus.alias_rows:
            fh.write(f"{form}\t{iri}\t{count}\n")
    return ({"kg": str(out / "gazetteer.kg"), "dataset": str(out / "dataset.jsonl"),
             "aliases": str(out / "aliases.tsv")},
            {"entities": len(corpus.kg), "documents": len(corpus.documents)})


COMMANDS = {
    "ingest": cmd_ingest, "precompute": cmd_precompute, "train": cmd_train, "calibrate": cmd_calibrate,
    "geoparse": cmd_geoparse, "evaluate": cmd_evaluate, "strategy-report": cmd_strategy_report,
    "feature-importance": cmd_feature_importance, "synth": cmd_synth,
}


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default 1)")
    p.add_argument("--config", default=None, help="TOML config file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kggeo", description="Knowledge-graph geoparsing.")
    parser.add_argument("--version", action="version", version=f"kggeo {__version__}")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_, *opts):
        p = sub.add_parser(name, help=help_)
        # defaults are SUPPRESSed so a global flag given before the subcommand survives
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--config", default=argparse.SUPPRESS)
        for o in opts:
            o(p)
        return p

    def paths(*names):
        def add(p):
            for n in names:
                p.add_argument(f"--{n.replace('_', '-')}", dest=n, default=None)
        return add

    def expansion(p):
        p.add_argument("--strategy", choices=[s.value for s in Strategy], default=None)
        p.add_argument("--L", dest="L", type=int, default=None, help="expansion size (default 14)")
        p.add_argument("--max-hops", dest="max_hops", type=int, default=None)

    def features(p):
        paths("embeddings", "tags", "anchor_vectors", "mention_vectors", "annotations", "aliases")(p)
        p.add_argument("--context", choices=["hashed", "none", "precomputed"], default=None,
                       help="anchor context vectors: hashed trigram fallback, none, or precomputed files")
        p.add_argument("--vertical", action="store_const", const=True, default=None,
                       help="also use sameAs-equivalent coordinates for non-geographic start nodes")

    def split(p):
        p.add_argument("--split", choices=["all", "train", "validation", "test"], default=None)

    def threshold(p):
        p.add_argument("--T", dest="threshold_T", type=float, default=None, help="distance threshold in km")

    cmd("ingest", "load and validate a graph snapshot", paths("kg", "geo_predicates", "out"))
    cmd("precompute", "precompute an expansion table", paths("kg", "geo_predicates", "embeddings", "cache", "out"),
        expansion)

    def train_opts(p):
        p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=None)
        p.add_argument("--search-iter", dest="search_iter", type=int, default=None,
                       help="randomized-search draws (0 keeps the configured hyperparameters)")
        p.add_argument("--search-folds", dest="search_folds", type=int, default=None)

    cmd("train", "train the selection model", paths("kg", "geo_predicates", "dataset", "cache", "model", "out"),
        expansion, features, split, threshold, train_opts)
    cmd("calibrate", "calibrate the confidence threshold",
        paths("kg", "geo_predicates", "dataset", "cache", "model", "out"), expansion, features, split, threshold)
    cmd("geoparse", "predict locations", paths("kg", "geo_predicates", "dataset", "cache", "model", "predictions",
                                               "out"), expansion, features, split)

    def eval_opts(p):
        p.add_argument("--granularity", action="store_const", const=True, default=None,
                       help="also require matching granularity level")

    cmd("evaluate", "score predictions", paths("dataset", "predictions", "kg", "geo_predicates", "out"), split,
        threshold, eval_opts)

    def report_opts(p):
        p.add_argument("--strategies", default=None, help="comma-separated strategy names")
        p.add_argument("--L-range", dest="L_range", default=None, help="'0:50' or '0,1,2,5'")
        p.add_argument("--max-hops", dest="max_hops", type=int, default=None)

    cmd("strategy-report", "recall and Jaccard curves per strategy",
        paths("kg", "geo_predicates", "dataset", "embeddings", "annotations", "aliases", "out"), split, threshold,
        report_opts)

    def fi_opts(p):
        p.add_argument("--group", action="store_const", const=True, default=None)
        p.add_argument("--normalize", action="store_const", const=True, default=None,
                       help="group gains divided by group size")

    cmd("feature-importance", "split-gain importance", paths("model"), fi_opts)

    def synth_opts(p):
        p.add_argument("--n-documents", dest="n_documents", type=int, default=None)

    cmd("synth", "write the synthetic benchmark files", paths("out"), synth_opts)
    return parser


_SCHEMA = None


def summary_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        _SCHEMA = json.loads(resources.files("kggeo.data").joinpath("summary_schema.json").read_text("utf-8"))
    return _SCHEMA


def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        _check_optional(cfg)
        outputs, summary = COMMANDS[args.command](cfg)
        doc = {"command": args.command, "status": "ok", "seed": cfg.seed,
               "outputs": {k: str(v) for k, v in outputs.items()}, "summary": summary}
        doc = json.loads(json.dumps(doc, default=str))
        jsonschema.validate(doc, summary_schema())
    except (MissingPathError, FileNotFoundError) as exc:
        print(f"kggeo: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (SnapshotFormatError, CacheError, ConfigError, json.JSONDecodeError) as exc:
        print(f"kggeo: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception as exc:  # anything else is a bug
        log.debug("internal error", exc_info=True)
        print(f"kggeo: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
