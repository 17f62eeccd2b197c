"""Distance-thresholded precision/recall/F1 and dataset splitting.

A prediction counts as a true positive when it lies strictly closer than T
to a ground-truth location. Predictions and truths are paired one-to-one,
closest pair first, so neither side is ever counted twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .annotator import Document
from .geo import EARTH_RADIUS_KM, geo_distance
from .kg import EntityId, GeoCoordinate, Granularity, KnowledgeGraph, granularity_of

__all__ = [
    "EARTH_RADIUS_KM", "geo_distance", "GeoPrediction", "Metrics", "EvaluationReport", "DatasetSplit",
    "match_pairs", "match_counts", "dedupe_predictions", "evaluate", "stratified_split", "DEDUP_TOLERANCE_KM",
]

DEDUP_TOLERANCE_KM = 0.001


@dataclass(frozen=True)
class GeoPrediction:
    document_id: str
    span: Tuple[int, int]
    entity: EntityId
    coordinate: GeoCoordinate
    score: float
    granularity: Granularity = Granularity.UNKNOWN

    def to_dict(self) -> dict:
        return {"doc_id": self.document_id, "start": self.span[0], "end": self.span[1], "entity_iri": self.entity,
                "lat": self.coordinate.lat, "lon": self.coordinate.lon, "score": self.score,
                "granularity": self.granularity.value}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeoPrediction":
        return cls(str(d["doc_id"]), (int(d["start"]), int(d["end"])), d["entity_iri"],
                   GeoCoordinate(float(d["lat"]), float(d["lon"])), float(d["score"]),
                   Granularity(d.get("granularity", Granularity.UNKNOWN.value)))


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass
class EvaluationReport:
    tp: int
    fp: int
    fn: int
    per_granularity: Dict[str, Metrics] = field(default_factory=dict)
    elapsed_per_doc: float = 0.0

    @property
    def metrics(self) -> Metrics:
        return Metrics(self.tp, self.fp, self.fn)

    @property
    def precision(self) -> float:
        return self.metrics.precision

    @property
    def recall(self) -> float:
        return self.metrics.recall

    @property
    def f1(self) -> float:
        return self.metrics.f1

    def to_dict(self) -> dict:
        d = self.metrics.to_dict()
        d["per_granularity"] = {k: v.to_dict() for k, v in sorted(self.per_granularity.items())}
        d["elapsed_per_doc"] = self.elapsed_per_doc
        return d


def match_pairs(predicted: Sequence[GeoCoordinate], truths: Sequence[GeoCoordinate], threshold_T: float,
                compatible=None) -> List[Tuple[int, int]]:
    """Greedy nearest-first one-to-one pairing of points closer than ``threshold_T``.

    ``compatible(i, j)`` optionally vetoes pairs (used for granularity-aware scoring).
    Distance ties are broken by prediction index, then truth index.
    """
    cands = []
    for i, p in enumerate(predicted):
        for j, t in enumerate(truths):
            d = geo_distance(p, t)
            if d < threshold_T and (compatible is None or compatible(i, j)):
                cands.append((d, i, j))
    cands.sort()
    used_p, used_t, pairs = set(), set(), []
    for _, i, j in cands:
        if i not in used_p and j not in used_t:
            used_p.add(i)
            used_t.add(j)
            pairs.append((i, j))
    return pairs


def match_counts(predicted: Sequence[GeoCoordinate], truths: Sequence[GeoCoordinate], threshold_T: float,
                 compatible=None) -> Metrics:
    tp = len(match_pairs(predicted, truths, threshold_T, compatible))
    return Metrics(tp, len(predicted) - tp, len(truths) - tp)


def dedupe_predictions(predictions: Sequence[GeoPrediction], tolerance_km: float = DEDUP_TOLERANCE_KM) -> List[GeoPrediction]:
    """Drop predictions within ``tolerance_km`` of a higher-scored one; span order is kept."""
    ranked = sorted(predictions, key=lambda p: (-p.score, p.span, p.entity))
    kept: List[GeoPrediction] = []
    for p in ranked:
        if all(geo_distance(p.coordinate, k.coordinate) >= tolerance_km for k in kept):
            kept.append(p)
    kept.sort(key=lambda p: (p.span, p.entity))
    return kept


def _coord(x) -> GeoCoordinate:
    return x if isinstance(x, GeoCoordinate) else x.coordinate


def _pred_level(x) -> Granularity:
    return getattr(x, "granularity", Granularity.UNKNOWN)


def _truth_level(x, kg: Optional[KnowledgeGraph]) -> Granularity:
    ent = getattr(x, "entity", None)
    if kg is None or ent is None or ent not in kg.entities:
        return Granularity.UNKNOWN
    return granularity_of(kg.entities[ent])


def evaluate(predictions: Mapping[str, Sequence], truths: Mapping[str, Sequence], threshold_T: float = 50.0,
             granularity_aware: bool = False, kg: Optional[KnowledgeGraph] = None,
             elapsed_seconds: float = 0.0) -> EvaluationReport:
    """Score predictions against truths document by document.

    ``predictions`` maps document id to :class:`GeoPrediction` (or bare
    coordinates); ``truths`` maps document id to :class:`GroundTruth` (or bare
    coordinates). Truth granularity comes from the truth entity in ``kg``.
    """
    if threshold_T <= 0:
        raise ValueError("threshold_T must be positive")
    unknown = set(predictions) - set(truths)
    if unknown:
        raise KeyError(f"predictions for unknown documents: {sorted(unknown)[:5]}")

    total = Metrics(0, 0, 0)
    levels: Dict[str, Metrics] = {}
    for doc_id in sorted(truths):
        preds = list(predictions.get(doc_id, ()))
        gts = list(truths[doc_id])
        pc = [_coord(p) for p in preds]
        tc = [_coord(t) for t in gts]
        pl = [_pred_level(p) for p in preds]
        tl = [_truth_level(t, kg) for t in gts]
        compat = (lambda i, j: pl[i] == tl[j]) if granularity_aware else None
        total = total + match_counts(pc, tc, threshold_T, compat)
        for level in set(pl) | set(tl):
            pi = [i for i, lv in enumerate(pl) if lv == level]
            ti = [j for j, lv in enumerate(tl) if lv == level]
            m = match_counts([pc[i] for i in pi], [tc[j] for j in ti], threshold_T)
            levels[level.value] = levels.get(level.value, Metrics(0, 0, 0)) + m
    n_docs = len(truths)
    return EvaluationReport(total.tp, total.fp, total.fn, levels, elapsed_seconds / n_docs if n_docs else 0.0)


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    test: Tuple[str, ...]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(documents: Sequence[Document], fractions: Tuple[float, float, float] = (0.64, 0.16, 0.20),
                     seed: int = 0) -> DatasetSplit:
    """Split by document, stratified on location count (0, 1, 2 or more)."""
    if not documents:
        raise ValueError("cannot split an empty dataset")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    strata: Dict[int, List[str]] = {0: [], 1: [], 2: []}
    for d in documents:
        strata[min(len(d.ground_truth), 2)].append(d.id)
    rng = np.random.default_rng(seed)
    train: List[str] = []
    val: List[str] = []
    test: List[str] = []
    for k in (0, 1, 2):
        ids = sorted(strata[k])
        ids = [ids[i] for i in rng.permutation(len(ids))]
        n = len(ids)
        n_val = min(n, _round_half_up(n * fractions[1]))
        n_test = min(n - n_val, _round_half_up(n * fractions[2]))
        val += ids[:n_val]
        test += ids[n_val:n_val + n_test]
        train += ids[n_val + n_test:]
    return DatasetSplit(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)))
