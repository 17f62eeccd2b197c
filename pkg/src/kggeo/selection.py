"""Candidate selection as regression on rank labels.

Each candidate of an expansion gets a ground-truth confidence ``c``: 0 when
it is at least T km from every truth, else ``L`` for the nearest, ``L-1``
for the next and so on. A tree ensemble learns to estimate ``c`` from the
feature vector; at inference the best-scored candidate wins unless its score
falls below the calibrated threshold ``c_th``.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .evaluation import DEDUP_TOLERANCE_KM, GeoPrediction, Metrics, dedupe_predictions, match_counts
from .expansion import Candidate
from .features import CATEGORICAL, FEATURE_GROUPS, FEATURE_NAMES, FeatureVector, encode_matrix, encoded_columns
from .geo import geo_distance
from .kg import GeoCoordinate
from .trees import Tree, fit_tree

log = logging.getLogger(__name__)

PathLike = Union[str, Path]
GroupKey = Tuple[str, Tuple[int, int]]

MODEL_FORMAT = "kggeo-model/1"
NO_THRESHOLD = -sys.float_info.max  # finite stand-in for "accept everything"


# --------------------------------------------------------------------------
# labels


def label_candidates(candidates: Sequence[Candidate], truths: Sequence[GeoCoordinate], L: int,
                     threshold_T: float = 50.0) -> List[Tuple[Candidate, int]]:
    """Rank labels by distance to the nearest truth; ties in distance go by EntityId."""
    dists = []
    for c in candidates:
        d = min((geo_distance(c.coordinate, t) for t in truths), default=math.inf)
        dists.append(d)
    inside = sorted((d, c.entity, i) for i, (c, d) in enumerate(zip(candidates, dists)) if d < threshold_T)
    labels = [0] * len(candidates)
    for rank, (_, _, i) in enumerate(inside):
        labels[i] = max(L - rank, 1)
    return list(zip(candidates, labels))


@dataclass(frozen=True)
class LabeledInstance:
    features: FeatureVector
    label_c: float
    group_key: GroupKey


def write_instances_csv(instances: Sequence[LabeledInstance], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", "start", "end"] + list(FEATURE_NAMES) + ["label"])
        for inst in instances:
            doc, (s, e) = inst.group_key
            w.writerow([doc, s, e] + [repr(v) for v in inst.features.values] + [repr(float(inst.label_c))])


def read_instances_csv(path: PathLike) -> List[LabeledInstance]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[3:-1] != list(FEATURE_NAMES):
            raise ValueError(f"{path}: unexpected feature columns")
        for row in r:
            vals = tuple(float(x) for x in row[3:-1])
            out.append(LabeledInstance(FeatureVector(vals), float(row[-1]), (row[0], (int(row[1]), int(row[2])))))
    return out


# --------------------------------------------------------------------------
# ensembles


class Algorithm(enum.Enum):
    GBDT = "gbdt"
    RF = "rf"
    DART = "dart"


_INT_PARAMS = ("num_trees", "max_leaves", "max_depth", "min_samples_leaf")


@dataclass(frozen=True)
class Hyperparameters:
    num_trees: int = 200
    max_leaves: int = 31
    max_depth: int = 8
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    feature_subsample: float = 0.8
    row_subsample: float = 0.8
    dart_drop_rate: float = 0.1

    def __post_init__(self):
        if self.num_trees < 0 or self.max_leaves < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError(f"invalid tree-size hyperparameters: {self}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.feature_subsample <= 1 and 0 < self.row_subsample <= 1):
            raise ValueError("subsample rates must lie in (0, 1]")
        if not 0 <= self.dart_drop_rate <= 1:
            raise ValueError("dart_drop_rate must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, d: Mapping[str, Any]) -> "Hyperparameters":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        kw = {k: (int(round(v)) if k in _INT_PARAMS else float(v)) for k, v in d.items()}
        return cls(**kw)


@dataclass
class RegressionEnsemble:
    """``prediction = base_score + sum(w_i * tree_i(x))``.

    For RF the base is 0 and every weight is ``1/num_trees``, so the sum is the
    mean of the tree outputs. With no trees the base is the label mean.
    """

    algorithm: Algorithm
    hyperparameters: Hyperparameters
    base_score: float
    trees: List[Tree] = field(default_factory=list)
    tree_weights: List[float] = field(default_factory=list)
    feature_gain: Dict[str, float] = field(default_factory=dict)
    columns: Tuple[str, ...] = ()

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_columns:
            raise ValueError(f"expected {self.n_columns} columns, got shape {X.shape}")
        return X

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        out = np.full(len(X), self.base_score)
        for w, t in zip(self.tree_weights, self.trees):
            out += w * t.predict(X)
        return out

    def staged_predict(self, X: np.ndarray):
        """Predictions after 0, 1, ..., n trees (with the final tree weights)."""
        X = self._check(X)
        out = np.full(len(X), self.base_score)
        yield out.copy()
        for w, t in zip(self.tree_weights, self.trees):
            out += w * t.predict(X)
            yield out.copy()

    def predict_vectors(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        if not vectors:
            return np.zeros(0)
        return self.predict_matrix(encode_matrix(vectors))

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "hyperparameters": asdict(self.hyperparameters),
            "base_score": self.base_score,
            "columns": list(self.columns),
            "feature_gain": dict(self.feature_gain),
            "trees": [{"weight": w, **t.to_dict()} for w, t in zip(self.tree_weights, self.trees)],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RegressionEnsemble":
        return cls(Algorithm(d["algorithm"]), Hyperparameters(**d["hyperparameters"]), float(d["base_score"]),
                   [Tree.from_dict(t) for t in d["trees"]], [float(t["weight"]) for t in d["trees"]],
                   {k: float(v) for k, v in d["feature_gain"].items()}, tuple(d["columns"]))


def predict(model, features: FeatureVector) -> float:
    ens = model.ensemble if isinstance(model, SelectionModel) else model
    if len(features) != len(FEATURE_NAMES):
        raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(features)}")
    return float(ens.predict_matrix(encode_matrix([features]))[0])


def _subsample(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    if rate >= 1.0:
        return np.arange(n)
    k = max(1, int(round(n * rate)))
    return np.sort(rng.choice(n, size=k, replace=False))


def train_matrix(X: np.ndarray, y: np.ndarray, algorithm: Algorithm = Algorithm.GBDT,
                 hyperparameters: Optional[Hyperparameters] = None, seed: int = 0,
                 columns: Optional[Sequence[str]] = None,
                 column_owner: Optional[Sequence[str]] = None) -> RegressionEnsemble:
    """Fit an ensemble on a numeric matrix.

    ``column_owner[j]`` names the logical feature column ``j`` belongs to, so
    that one-hot columns report their gain under the original feature.
    """
    hp = hyperparameters or Hyperparameters()
    algorithm = Algorithm(algorithm)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training needs at least one instance")
    if len(y) != len(X):
        raise ValueError("label count does not match instance count")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("NaN or infinite value in training data")
    n, m = X.shape
    columns = tuple(columns) if columns is not None else tuple(f"x{j}" for j in range(m))
    owner = tuple(column_owner) if column_owner is not None else columns
    rng = np.random.default_rng(seed)
    tree_kw = dict(max_leaves=hp.max_leaves, max_depth=hp.max_depth, min_samples_leaf=hp.min_samples_leaf)

    trees: List[Tree] = []
    weights: List[float] = []
    col_gain = np.zeros(m)
    mean = float(np.mean(y))

    if algorithm is Algorithm.RF:
        for _ in range(hp.num_trees):
            rows = np.sort(rng.integers(0, n, size=n))
            cols = _subsample(rng, m, hp.feature_subsample)
            t, g = fit_tree(X, y, rows, cols, **tree_kw)
            trees.append(t)
            col_gain += g
        base = mean if not trees else 0.0
        weights = [1.0 / len(trees)] * len(trees) if trees else []
    else:
        base = mean
        F = np.full(n, base)
        outputs: List[np.ndarray] = []
        for _ in range(hp.num_trees):
            dropped: List[int] = []
            if algorithm is Algorithm.DART and trees:
                dropped = [i for i in range(len(trees)) if rng.random() < hp.dart_drop_rate]
            F_fit = F
            if dropped:
                F_fit = F - sum(weights[i] * outputs[i] for i in dropped)
            rows = _subsample(rng, n, hp.row_subsample)
            cols = _subsample(rng, m, hp.feature_subsample)
            t, g = fit_tree(X, y - F_fit, rows, cols, **tree_kw)
            out = t.predict(X)
            col_gain += g
            k = len(dropped)
            w = hp.learning_rate / (k + 1)
            if dropped:
                scale = k / (k + 1)
                F = F_fit.copy()
                for i in dropped:
                    weights[i] *= scale
                    F += weights[i] * outputs[i]
                F += w * out
            else:
                F = F + w * out
            trees.append(t)
            weights.append(w)
            outputs.append(out)

    gain: Dict[str, float] = {}
    for j, name in enumerate(owner):
        gain[name] = gain.get(name, 0.0) + float(col_gain[j])
    return RegressionEnsemble(algorithm, hp, base, trees, weights, gain, columns)


def train(instances: Sequence[LabeledInstance], algorithm: Algorithm = Algorithm.GBDT,
          hyperparameters: Optional[Hyperparameters] = None, seed: int = 0) -> RegressionEnsemble:
    if not instances:
        raise ValueError("training needs at least one instance")
    X = encode_matrix([i.features for i in instances])
    y = np.array([i.label_c for i in instances], dtype=float)
    cols = encoded_columns()
    ens = train_matrix(X, y, algorithm, hyperparameters, seed, [c for _, c in cols], [o for o, _ in cols])
    for name in FEATURE_NAMES:
        ens.feature_gain.setdefault(name, 0.0)
    return ens


# --------------------------------------------------------------------------
# hyperparameter search


class Distribution:
    def sample(self, rng: np.random.Generator):
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float
    high: float

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.low > self.high:
            raise ValueError(f"invalid uniform bounds [{self.low}, {self.high}]")

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high)) if self.high > self.low else float(self.low)


@dataclass(frozen=True)
class LogUniform(Distribution):
    low: float
    high: float

    def __post_init__(self):
        if not (0 < self.low <= self.high) or not math.isfinite(self.high):
            raise ValueError(f"invalid log-uniform bounds [{self.low}, {self.high}]")

    def sample(self, rng):
        if self.high == self.low:
            return float(self.low)
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class RandInt(Distribution):
    """Integers in ``[low, high]`` inclusive."""

    low: int
    high: int

    def __post_init__(self):
        if int(self.low) != self.low or int(self.high) != self.high or self.low > self.high:
            raise ValueError(f"invalid integer bounds [{self.low}, {self.high}]")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Choice(Distribution):
    values: Tuple[Any, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("choice needs at least one value")

    def sample(self, rng):
        return self.values[int(rng.integers(0, len(self.values)))]


def default_search_space() -> Dict[str, Distribution]:
    return {
        "num_trees": RandInt(50, 300),
        "max_leaves": RandInt(4, 63),
        "max_depth": RandInt(3, 10),
        "learning_rate": LogUniform(0.02, 0.3),
        "min_samples_leaf": RandInt(1, 20),
        "feature_subsample": Uniform(0.5, 1.0),
        "row_subsample": Uniform(0.5, 1.0),
        "dart_drop_rate": Uniform(0.05, 0.3),
    }


def sample_hyperparameters(param_distributions: Mapping[str, Any], rng: np.random.Generator,
                           base: Optional[Hyperparameters] = None) -> Hyperparameters:
    values = asdict(base or Hyperparameters())
    for name in sorted(param_distributions):
        dist = param_distributions[name]
        values[name] = dist.sample(rng) if isinstance(dist, Distribution) else dist
    return Hyperparameters.from_mapping(values)


def _rmse(model: RegressionEnsemble, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((model.predict_matrix(X) - y) ** 2)))


def random_search(train_set: Sequence[LabeledInstance], validation_set: Optional[Sequence[LabeledInstance]],
                  algorithm: Algorithm = Algorithm.GBDT, param_distributions: Optional[Mapping[str, Any]] = None,
                  n_iter: int = 50, k_folds: int = 3, seed: int = 0) -> Hyperparameters:
    """Randomized search scored by mean RMSE over document-grouped folds of ``train_set``.

    With ``k_folds < 2`` (or fewer documents than folds) each draw is instead
    scored on ``validation_set`` as a single holdout.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if not train_set:
        raise ValueError("empty training set")
    space = default_search_space() if param_distributions is None else dict(param_distributions)
    for name in space:
        if name not in Hyperparameters.__dataclass_fields__:
            raise ValueError(f"unknown hyperparameter {name!r}")
    rng = np.random.default_rng(seed)
    draws = [sample_hyperparameters(space, rng) for _ in range(n_iter)]
    if n_iter == 1:
        return draws[0]

    cols = encoded_columns()
    names, owners = [c for _, c in cols], [o for o, _ in cols]
    X = encode_matrix([i.features for i in train_set])
    y = np.array([i.label_c for i in train_set])
    docs = sorted({i.group_key[0] for i in train_set})
    splits: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    if k_folds >= 2 and len(docs) >= k_folds:
        perm = rng.permutation(len(docs))
        fold_of = {docs[p]: f % k_folds for f, p in enumerate(perm)}
        fold = np.array([fold_of[i.group_key[0]] for i in train_set])
        for f in range(k_folds):
            tr, te = fold != f, fold == f
            splits.append((X[tr], y[tr], X[te], y[te]))
    else:
        if not validation_set:
            raise ValueError("holdout scoring needs a non-empty validation set")
        Xv = encode_matrix([i.features for i in validation_set])
        yv = np.array([i.label_c for i in validation_set])
        splits.append((X, y, Xv, yv))

    best, best_score = draws[0], math.inf
    for hp in draws:
        scores = [_rmse(train_matrix(a, b, algorithm, hp, seed, names, owners), c, d) for a, b, c, d in splits]
        score = float(np.mean(scores))
        log.debug("search %s -> %.5f", hp, score)
        if score < best_score:
            best, best_score = hp, score
    return best


# --------------------------------------------------------------------------
# threshold and selection


@dataclass
class CandidateSet:
    """The candidates of one annotation with their feature vectors."""

    key: GroupKey
    candidates: List[Candidate]
    features: List[FeatureVector]


@dataclass
class ValidationDocument:
    document_id: str
    truths: List[GeoCoordinate]
    candidate_sets: List[CandidateSet]


@dataclass(frozen=True)
class ScoredDocument:
    """Winning (score, coordinate) per annotation, before thresholding."""

    truths: Tuple[GeoCoordinate, ...]
    winners: Tuple[Tuple[float, GeoCoordinate], ...]


def _decide(doc: ScoredDocument, threshold: float, threshold_T: float) -> Metrics:
    preds = [GeoPrediction("", (i, i + 1), "", c, s) for i, (s, c) in enumerate(doc.winners) if s >= threshold]
    preds = dedupe_predictions(preds, DEDUP_TOLERANCE_KM)
    return match_counts([p.coordinate for p in preds], list(doc.truths), threshold_T)


def f1_at(scored_docs: Sequence[ScoredDocument], threshold: float, threshold_T: float) -> float:
    total = Metrics(0, 0, 0)
    for d in scored_docs:
        total = total + _decide(d, threshold, threshold_T)
    return total.f1


def sweep_threshold(scored_docs: Sequence[ScoredDocument], threshold_T: float = 50.0) -> float:
    """F1-maximizing threshold over -inf and every distinct winner score; ties favour the larger."""
    if not scored_docs:
        raise ValueError("empty validation set")
    scores = sorted({s for d in scored_docs for s, _ in d.winners})
    if not scores:
        return NO_THRESHOLD
    best_t, best_f1 = -math.inf, f1_at(scored_docs, -math.inf, threshold_T)
    for t in scores:
        f = f1_at(scored_docs, t, threshold_T)
        if f >= best_f1:
            best_t, best_f1 = t, f
    return best_t if math.isfinite(best_t) else NO_THRESHOLD


def _best(candidates: Sequence[Candidate], scores: Sequence[float]) -> Optional[Tuple[Candidate, float]]:
    best = None
    for c, s in zip(candidates, scores):
        s = float(s)
        if best is None or s > best[1] or (s == best[1] and c.entity < best[0].entity):
            best = (c, s)
    return best


def score_documents(model, documents: Sequence[ValidationDocument]) -> List[ScoredDocument]:
    ens = model.ensemble if isinstance(model, SelectionModel) else model
    out = []
    for doc in documents:
        winners = []
        for cs in doc.candidate_sets:
            if not cs.candidates:
                continue
            b = _best(cs.candidates, ens.predict_vectors(cs.features))
            winners.append((b[1], b[0].coordinate))
        out.append(ScoredDocument(tuple(doc.truths), tuple(winners)))
    return out


def calibrate_threshold(model, validation_set: Sequence[ValidationDocument], threshold_T: float = 50.0) -> float:
    if not validation_set:
        raise ValueError("empty validation set")
    return sweep_threshold(score_documents(model, validation_set), threshold_T)


@dataclass
class SelectionModel:
    ensemble: RegressionEnsemble
    c_th: float = NO_THRESHOLD

    def __post_init__(self):
        if not math.isfinite(self.c_th):
            raise ValueError("c_th must be finite")

    def to_json(self) -> str:
        cols = encoded_columns()
        doc = {
            "format": MODEL_FORMAT,
            "c_th": self.c_th,
            "feature_schema": {
                "features": list(FEATURE_NAMES),
                "categorical": {k: list(v) for k, v in CATEGORICAL.items()},
                "one_hot": [[o, c] for o, c in cols],
            },
            "ensemble": self.ensemble.to_dict(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: PathLike) -> "SelectionModel":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a selection model file")
        if doc["feature_schema"]["features"] != list(FEATURE_NAMES):
            raise ValueError(f"{path}: feature schema does not match this version")
        return cls(RegressionEnsemble.from_dict(doc["ensemble"]), float(doc["c_th"]))

    def with_threshold(self, c_th: float) -> "SelectionModel":
        return replace(self, c_th=c_th)


def select_best(model, scored: Sequence[Tuple[Candidate, float]]) -> Optional[Candidate]:
    """Highest-scored candidate (ties by EntityId), or None below the threshold."""
    c_th = model.c_th if isinstance(model, SelectionModel) else float(model)
    if not scored:
        return None
    b = _best([c for c, _ in scored], [s for _, s in scored])
    return b[0] if b[1] >= c_th else None


def feature_importance(model, normalize_by_group: bool = False, by_group: Optional[bool] = None) -> Dict[str, float]:
    """Split-gain totals per feature, or per group (divided by group size when normalizing)."""
    ens = model.ensemble if isinstance(model, SelectionModel) else model
    per_feature = {n: float(ens.feature_gain.get(n, 0.0)) for n in FEATURE_NAMES}
    if by_group is None:
        by_group = normalize_by_group
    if not by_group:
        return per_feature
    out = {}
    for g, names in FEATURE_GROUPS.items():
        total = sum(per_feature[n] for n in names)
        out[g] = total / len(names) if normalize_by_group else total
    return out
