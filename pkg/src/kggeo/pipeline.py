"""End-to-end geoparsing and the experiment harness built on it.

``geoparse`` runs annotate -> expand -> score -> select -> vertical expansion
for one document. The helpers below build labeled training instances and
validation sets from a dataset, and tabulate how expansion strategies behave
as the expansion size grows.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .annotator import Annotation, Document, GroundTruth, Lexicon, annotate
from .embeddings import EmbeddingStore
from .evaluation import GeoPrediction, dedupe_predictions
from .expansion import (Candidate, ExpansionConfig, ExpansionTable, Strategy, candidate_pool, jaccard_distance,
                        max_theoretical_recall, precompute_expansions)
from .features import TagRecord, compute_features, fallback_tag
from .kg import GeoCoordinate, KnowledgeGraph, SnapshotFormatError, granularity_of
from .selection import (CandidateSet, LabeledInstance, SelectionModel, ValidationDocument, _best,
                        label_candidates)
from .text import tokenize

PathLike = Union[str, Path]
TagIndex = Mapping[Tuple[str, Tuple[int, int]], TagRecord]


# --------------------------------------------------------------------------
# dataset files


def load_dataset(path: PathLike) -> List[Document]:
    """JSON lines ``{"id", "text", "locations": [{"lat", "lon", "entity_iri"?}]}``."""
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                doc_id, text = str(rec["id"]), rec["text"]
                if not isinstance(text, str):
                    raise TypeError("text must be a string")
                truths = [GroundTruth(GeoCoordinate(float(l["lat"]), float(l["lon"])), l.get("entity_iri"))
                          for l in rec.get("locations", [])]
            except (ValueError, KeyError, TypeError) as exc:
                raise SnapshotFormatError(f"bad dataset record: {exc}", lineno, path) from None
            if doc_id in seen:
                raise SnapshotFormatError(f"duplicate document id {doc_id}", lineno, path)
            seen.add(doc_id)
            docs.append(Document(doc_id, text, truths))
    return docs


def write_dataset(documents: Sequence[Document], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in documents:
            locs = []
            for g in d.ground_truth:
                loc = {"lat": g.coordinate.lat, "lon": g.coordinate.lon}
                if g.entity is not None:
                    loc["entity_iri"] = g.entity
                locs.append(loc)
            fh.write(json.dumps({"id": d.id, "text": d.text, "locations": locs}, ensure_ascii=False) + "\n")


def load_predictions(path: PathLike) -> Dict[str, List[GeoPrediction]]:
    out: Dict[str, List[GeoPrediction]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                p = GeoPrediction.from_dict(json.loads(raw))
            except (ValueError, KeyError, TypeError) as exc:
                raise SnapshotFormatError(f"bad prediction record: {exc}", lineno, path) from None
            out.setdefault(p.document_id, []).append(p)
    return out


def write_predictions(predictions: Sequence[GeoPrediction], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# candidates and features


@dataclass
class FeatureInputs:
    """Optional stores consulted by feature computation."""

    embeddings: Optional[EmbeddingStore] = None
    tags: Optional[TagIndex] = None
    anchor_vectors: object = None  # HashedContextEncoder, PrecomputedContextVectors or None
    ontology: Optional[Mapping[str, str]] = None


def vertical_coordinate(kg: KnowledgeGraph, entity) -> Optional[GeoCoordinate]:
    """Direct coordinate first, then the first coordinate along the sameAs closure."""
    coord = kg.geo_index.get(entity)
    if coord is not None:
        return coord
    for other in kg.same_as_closure(entity):
        coord = kg.geo_index.get(other)
        if coord is not None:
            return coord
    return None


def annotation_candidates(kg: KnowledgeGraph, table, annotation: Annotation, L: int,
                          vertical: bool = False) -> List[Candidate]:
    """Candidate vector for one annotation.

    With ``vertical`` the start node joins the pool (at hop 0) when it has no
    coordinate of its own but an equivalent entity does.
    """
    start = annotation.start_entity
    if start not in kg.entities:
        return []
    pool = candidate_pool(kg, table, start, L)
    if vertical and start not in kg.geo_index and all(c.entity != start for c in pool):
        coord = vertical_coordinate(kg, start)
        if coord is not None:
            pool = [Candidate(start, coord, 0, 0, 0)] + pool
    return pool


def candidate_set(doc: Document, annotation: Annotation, kg: KnowledgeGraph, table, L: int,
                  inputs: Optional[FeatureInputs] = None, vertical: bool = False) -> CandidateSet:
    inputs = inputs or FeatureInputs()
    cands = annotation_candidates(kg, table, annotation, L, vertical)
    tag = None
    if inputs.tags is not None:
        tag = inputs.tags.get((annotation.document_id, annotation.span))
    if tag is None:
        tag = fallback_tag(annotation)
    feats = [compute_features(annotation, c, kg, tag, inputs.embeddings, inputs.anchor_vectors, doc.text,
                              inputs.ontology) for c in cands]
    return CandidateSet((doc.id, annotation.span), cands, feats)


def _annotations_for(doc: Document, annotations) -> List[Annotation]:
    if isinstance(annotations, Lexicon):
        return annotate(doc, annotations)
    if isinstance(annotations, Mapping):
        return list(annotations.get(doc.id, ()))
    return [a for a in annotations if a.document_id == doc.id]


def build_instances(documents: Sequence[Document], annotations, kg: KnowledgeGraph, table, L: int,
                    threshold_T: float = 50.0, inputs: Optional[FeatureInputs] = None,
                    vertical: bool = False) -> List[LabeledInstance]:
    """Labeled feature vectors for every candidate of every annotation."""
    out: List[LabeledInstance] = []
    for doc in documents:
        truths = [g.coordinate for g in doc.ground_truth]
        for ann in _annotations_for(doc, annotations):
            cs = candidate_set(doc, ann, kg, table, L, inputs, vertical)
            for (cand, label), fv in zip(label_candidates(cs.candidates, truths, L, threshold_T), cs.features):
                out.append(LabeledInstance(fv, float(label), cs.key))
    return out


def build_validation_set(documents: Sequence[Document], annotations, kg: KnowledgeGraph, table, L: int,
                         inputs: Optional[FeatureInputs] = None, vertical: bool = False) -> List[ValidationDocument]:
    out = []
    for doc in documents:
        sets = [candidate_set(doc, a, kg, table, L, inputs, vertical) for a in _annotations_for(doc, annotations)]
        out.append(ValidationDocument(doc.id, [g.coordinate for g in doc.ground_truth], sets))
    return out


# --------------------------------------------------------------------------
# geoparsing


def geoparse(doc: Document, kg: KnowledgeGraph, annotations, table, model: SelectionModel,
             inputs: Optional[FeatureInputs] = None, L: Optional[int] = None,
             vertical: bool = False) -> List[GeoPrediction]:
    """Predicted locations for one document, at most one per annotation."""
    if L is None:
        L = table.size_L if isinstance(table, ExpansionTable) else 0
    preds: List[GeoPrediction] = []
    for ann in _annotations_for(doc, annotations):
        cs = candidate_set(doc, ann, kg, table, L, inputs, vertical)
        if not cs.candidates:
            continue
        scores = model.ensemble.predict_vectors(cs.features)
        winner, score = _best(cs.candidates, scores)
        if score < model.c_th:
            continue
        coord = kg.geo_index.get(winner.entity)
        if coord is None:
            coord = vertical_coordinate(kg, winner.entity) if vertical else None
        if coord is None:
            coord = winner.coordinate
        preds.append(GeoPrediction(doc.id, ann.span, winner.entity, coord, score,
                                   granularity_of(kg.entities[winner.entity])))
    return dedupe_predictions(preds)


def geoparse_all(documents: Sequence[Document], kg: KnowledgeGraph, annotations, table, model: SelectionModel,
                 inputs: Optional[FeatureInputs] = None, L: Optional[int] = None,
                 vertical: bool = False) -> Tuple[Dict[str, List[GeoPrediction]], float]:
    """Predictions keyed by document id, plus the wall-clock seconds spent."""
    t0 = time.perf_counter()
    out = {d.id: geoparse(d, kg, annotations, table, model, inputs, L, vertical) for d in documents}
    return out, time.perf_counter() - t0


def exact_label_baseline(doc: Document, kg: KnowledgeGraph) -> List[GeoPrediction]:
    """Predict every geo entity whose label equals a token n-gram verbatim.

    Among entities sharing a label the highest degree wins (ties by IRI). A
    comparison floor only: no annotation, expansion or learning.
    """
    index: Dict[str, List[str]] = {}
    for iri in kg.geo_index:
        index.setdefault(kg.entities[iri].label, []).append(iri)
    max_n = max((len(tokenize(lbl)) for lbl in index), default=1)
    tokens = tokenize(doc.text)
    preds = []
    i = 0
    while i < len(tokens):
        step = 1
        for n in range(min(max_n, len(tokens) - i), 0, -1):
            s, e = tokens[i].start, tokens[i + n - 1].end
            hits = index.get(doc.text[s:e])
            if hits:
                best = min(hits, key=lambda x: (-kg.degree.get(x, 0), x))
                preds.append(GeoPrediction(doc.id, (s, e), best, kg.geo_index[best], 1.0,
                                           granularity_of(kg.entities[best])))
                step = n
                break
        i += step
    return dedupe_predictions(preds)


# --------------------------------------------------------------------------
# strategy report


@dataclass
class StrategyReport:
    columns: List[str]
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(str(int(r[c])) if c == "L" else repr(float(r[c])) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"columns": self.columns, "rows": self.rows}


def mean_jaccard(kg: KnowledgeGraph, table_a, table_b, annotations: Sequence[Annotation], L: int) -> float:
    """Average Jaccard distance between the entity sets two strategies retrieve."""
    vals = []
    for ann in annotations:
        if ann.start_entity not in kg.entities:
            continue
        a = {c.entity for c in candidate_pool(kg, table_a, ann.start_entity, L)}
        b = {c.entity for c in candidate_pool(kg, table_b, ann.start_entity, L)}
        vals.append(jaccard_distance(a, b))
    return sum(vals) / len(vals) if vals else 0.0


def strategy_report(kg: KnowledgeGraph, documents: Sequence[Document], annotations, strategies: Sequence[Strategy],
                    L_range: Sequence[int], threshold_T: float = 50.0, embeddings: Optional[EmbeddingStore] = None,
                    max_hops: int = 6, threads: int = 1, tables: Optional[Mapping[Strategy, ExpansionTable]] = None
                    ) -> StrategyReport:
    """Maximum theoretical recall per strategy and pairwise Jaccard distance, per L."""
    by_doc = {d.id: _annotations_for(d, annotations) for d in documents}
    flat = [a for d in documents for a in by_doc[d.id]]
    L_range = sorted(set(int(x) for x in L_range))
    baseline = max_theoretical_recall({}, documents, by_doc, 0, threshold_T, kg)
    if L_range == [0]:
        return StrategyReport(["L", "baseline"], [{"L": 0, "baseline": baseline}])

    strategies = list(dict.fromkeys(Strategy(s) for s in strategies))
    top = max(L_range)
    built: Dict[Strategy, ExpansionTable] = {}
    for s in strategies:
        if tables is not None and s in tables and tables[s].size_L >= top:
            built[s] = tables[s]
        else:
            built[s] = precompute_expansions(kg, ExpansionConfig(s, top, max_hops), embeddings, threads)
    pairs = list(combinations(strategies, 2))
    cols = ["L", "baseline"] + [f"recall:{s.value}" for s in strategies] + \
        [f"jaccard:{a.value}|{b.value}" for a, b in pairs]
    report = StrategyReport(cols)
    for L in L_range:
        row: Dict[str, float] = {"L": L, "baseline": baseline}
        for s in strategies:
            row[f"recall:{s.value}"] = max_theoretical_recall(built[s], documents, by_doc, L, threshold_T, kg)
        for a, b in pairs:
            row[f"jaccard:{a.value}|{b.value}"] = mean_jaccard(kg, built[a], built[b], flat, L)
        report.rows.append(row)
    for s in strategies:
        curve = [r[f"recall:{s.value}"] for r in report.rows]
        assert all(x <= y for x, y in zip(curve, curve[1:])), f"recall curve for {s.value} is not monotone"
    return report
