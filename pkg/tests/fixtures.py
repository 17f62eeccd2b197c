"""Hand-built fixtures shared by the unit tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from kggeo.expansion import Candidate
from kggeo.features import FEATURE_NAMES, FeatureVector, encoded_columns
from kggeo.kg import GeoCoordinate
from kggeo.selection import (Algorithm, CandidateSet, Hyperparameters, RegressionEnsemble, ScoredDocument,
                             ValidationDocument)
from kggeo.trees import Tree

KM_PER_DEG_LAT = 6371.0088 * np.pi / 180  # along a meridian


def north_of(origin: GeoCoordinate, km: float) -> GeoCoordinate:
    return GeoCoordinate(origin.lat + km / KM_PER_DEG_LAT, origin.lon)


# labeling configuration: five candidates, three of them inside T = 50 km of the truth
LABELING_TRUTH = GeoCoordinate(10.0, 20.0)
LABELING_DISTANCES = {"x:c1": 31.0, "x:c2": 4.0, "x:c3": 120.0, "x:c4": 18.0, "x:c5": 50.5}
LABELING_LABELS = {"x:c2": 5, "x:c4": 4, "x:c1": 3, "x:c3": 0, "x:c5": 0}


def labeling_candidates():
    return [Candidate(e, north_of(LABELING_TRUTH, d), 1, i, i) for i, (e, d) in enumerate(LABELING_DISTANCES.items())]


# Threshold calibration: five documents, one winner per annotation.
#   d1 correct at 0.9, d2 correct at 0.8, d3 wrong at 0.95 (no location),
#   d4 wrong at 0.3 (truth missed), d5 wrong at 0.2 (no location).
# F1 by threshold (thresholds tried: -inf and each score):
#   -inf, 0.2 : TP 2 FP 3 FN 1 -> P 2/5 R 2/3 F1 1/2
#   0.3       : TP 2 FP 2 FN 1 -> P 1/2 R 2/3 F1 4/7
#   0.8       : TP 2 FP 1 FN 1 -> P 2/3 R 2/3 F1 2/3   <- best
#   0.9       : TP 1 FP 1 FN 2 -> P 1/2 R 1/3 F1 2/5
#   0.95      : TP 0            -> F1 0
CALIB_BEST = 0.8
CALIB_BEST_F1 = 2 / 3
CALIB_F1 = {float("-inf"): 1 / 2, 0.2: 1 / 2, 0.3: 4 / 7, 0.8: 2 / 3, 0.9: 2 / 5, 0.95: 0.0}

_A, _B, _C = GeoCoordinate(51.5, -0.1), GeoCoordinate(48.9, 2.3), GeoCoordinate(41.9, 12.5)
_FAR = GeoCoordinate(-33.9, 151.2)
CALIB_LAYOUT = [
    ("d1", [_A], [(0.9, _A)]),
    ("d2", [_B], [(0.8, _B)]),
    ("d3", [], [(0.95, _FAR)]),
    ("d4", [_C], [(0.3, _FAR)]),
    ("d5", [], [(0.2, GeoCoordinate(0.0, 0.0))]),
]


def calibration_scored():
    return [ScoredDocument(tuple(t), tuple(w)) for _, t, w in CALIB_LAYOUT]


def _fv(confidence: float) -> FeatureVector:
    values = [0.0] * len(FEATURE_NAMES)
    values[0] = confidence
    return FeatureVector(tuple(values))


def confidence_echo_model() -> RegressionEnsemble:
    """One hand-built tree whose output equals the annotation confidence on the fixture values."""
    cuts = [0.25, 0.55, 0.85, 0.925]
    leaves = [0.2, 0.3, 0.8, 0.9, 0.95]
    # chain: node 2k splits, its left child is a leaf, its right child is the next split
    feature, threshold, left, right, value = [], [], [], [], []
    for k, cut in enumerate(cuts):
        i = len(feature)
        feature += [0, -1]
        threshold += [cut, 0.0]
        left += [i + 1, -1]
        right += [i + 2, -1]
        value += [0.0, leaves[k]]
    feature.append(-1)
    threshold.append(0.0)
    left.append(-1)
    right.append(-1)
    value.append(leaves[-1])
    tree = Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))
    cols = tuple(c for _, c in encoded_columns())
    return RegressionEnsemble(Algorithm.GBDT, Hyperparameters(num_trees=1), 0.0, [tree], [1.0], {}, cols)


def calibration_validation_set():
    """The same layout as candidate sets; d1 also carries a weaker distractor."""
    docs = []
    for doc_id, truths, winners in CALIB_LAYOUT:
        sets = []
        for k, (score, coord) in enumerate(winners):
            cands = [Candidate(f"x:{doc_id}-{k}", coord, 1, 0, 0)]
            feats = [_fv(score)]
            if doc_id == "d1":
                cands.append(Candidate("x:distractor", _FAR, 2, 1, 1))
                feats.append(_fv(0.2))
            sets.append(CandidateSet((doc_id, (k, k + 1)), cands, feats))
        docs.append(ValidationDocument(doc_id, list(truths), sets))
    return docs


# Metric table: (name, predictions, truths, T, expected (tp, fp, fn)).
_P = GeoCoordinate(45.0, 7.0)
METRIC_CASES = [
    ("exact hit", [_P], [_P], 50, (1, 0, 0)),
    ("just inside", [north_of(_P, 49.9)], [_P], 50, (1, 0, 0)),
    ("just outside", [north_of(_P, 50.1)], [_P], 50, (0, 1, 1)),
    ("no prediction", [], [_P], 50, (0, 0, 1)),
    ("prediction without truth", [_P], [], 50, (0, 1, 0)),
    ("empty both", [], [], 50, (0, 0, 0)),
    ("two truths one prediction", [_P], [_P, north_of(_P, 10)], 50, (1, 0, 1)),
    ("two predictions one truth", [_P, north_of(_P, 10)], [_P], 50, (1, 1, 0)),
    ("two and two", [_P, north_of(_P, 300)], [north_of(_P, 5), north_of(_P, 290)], 50, (2, 0, 0)),
    ("greedy closest first", [north_of(_P, 20), north_of(_P, 45)], [north_of(_P, 0), north_of(_P, 60)], 50,
     (2, 0, 0)),
    ("far both ways", [north_of(_P, 200)], [north_of(_P, -200)], 50, (0, 1, 1)),
    ("large T", [north_of(_P, 200)], [north_of(_P, -200)], 500, (1, 0, 0)),
]
