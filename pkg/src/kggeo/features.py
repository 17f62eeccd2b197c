"""The 31 regressors describing one (annotation, candidate) pair.

Groups: A&E (annotation and expansion), SPE (spelling), DBP (graph
content), SYN (syntax), NER, LAT (latent similarity). Categorical features
are stored as vocabulary indices; :func:`encode_matrix` one-hot expands them
for tree training.

Missing inputs never raise. Without a tag record the rule-based fallback
tagger is used, a missing embedding gives similarity 0.0, and a missing page
length is recorded as -1.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .annotator import Annotation, Document
from .embeddings import EmbeddingStore, cosine
from .expansion import Candidate
from .kg import EntityId, KnowledgeGraph, SnapshotFormatError, class_ancestors, load_ontology
from .text import context_window, count_occurrences, count_tokens, edit_distance, lower_chars, uppercase_count

PathLike = Union[str, Path]

__all__ = [
    "FEATURE_NAMES", "FEATURE_GROUPS", "CATEGORICAL", "SUPERCLASS_BUCKETS", "POS_TAGS", "CHUNK_TAGS",
    "NER_TAGS", "FeatureVector", "TagRecord", "HashedContextEncoder", "PrecomputedContextVectors",
    "compute_features", "edit_distance", "encode_matrix", "encoded_columns", "fallback_tagger",
    "load_tags", "write_tags", "load_anchor_vectors", "write_feature_csv",
]

FEATURE_GROUPS: Dict[str, Tuple[str, ...]] = {
    "A&E": ("confidence", "hop", "expansion_rank", "expansion_rank_onlygeo"),
    "SPE": ("num_tokens_candidate_label", "len_candidate_label", "edit_from_original_label",
            "num_tokens_anchor", "len_anchor", "uppercase_in_anchor", "edit_from_anchor",
            "edit_ratio_from_anchor", "num_tokens_ratio", "len_ratio"),
    "DBP": ("superclass", "num_of_superclasses", "num_of_classes", "page_degree", "page_length",
            "anchor_in_short_abstract", "anchor_in_short_abstract_ci", "anchor_in_long_abstract",
            "anchor_in_long_abstract_ci"),
    "SYN": ("pos_tag", "chunk_tag", "pos_confidence", "chunk_confidence"),
    "NER": ("ner_tag", "ner_confidence"),
    "LAT": ("rdf2vec_similarity", "bert_similarity"),
}
FEATURE_NAMES: Tuple[str, ...] = tuple(n for names in FEATURE_GROUPS.values() for n in names)
FEATURE_INDEX = {n: i for i, n in enumerate(FEATURE_NAMES)}
GROUP_OF = {n: g for g, names in FEATURE_GROUPS.items() for n in names}

SUPERCLASS_BUCKETS = ("Place", "Agent", "Event", "Activity/Work", "Other")
# top-level ontology class -> bucket; anything else falls into Other
_TOP_BUCKET = {"dbo:Place": 0, "dbo:Agent": 1, "dbo:Event": 2, "dbo:Activity": 3, "dbo:Work": 3}

# Penn Treebank tags plus a handful of extensions used by modern taggers
POS_TAGS = ("CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP",
            "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB",
            "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ".", ",", ":", "``", "''",
            "-LRB-", "-RRB-", "#", "$", "HYPH", "NFP", "ADD", "AFX", "XX")
CHUNK_TAGS = ("NP", "VP", "PP", "ADVP", "ADJP", "SBAR", "PRT", "INTJ", "CONJP", "O")
NER_TAGS = ("PER", "LOC", "ORG", "MISC", "O")

CATEGORICAL: Dict[str, Tuple[str, ...]] = {
    "superclass": SUPERCLASS_BUCKETS, "pos_tag": POS_TAGS, "chunk_tag": CHUNK_TAGS, "ner_tag": NER_TAGS,
}

MISSING_PAGE_LENGTH = -1.0


@dataclass(frozen=True)
class FeatureVector:
    values: Tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("non-finite feature value")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_INDEX[name]]

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "FeatureVector":
        return cls(tuple(float(d[n]) for n in FEATURE_NAMES))


# --------------------------------------------------------------------------
# tags

_BIO_PREFIXES = ("B-", "I-", "E-", "S-", "L-", "U-")


def _strip_bio(tag: str) -> str:
    return tag[2:] if tag[:2] in _BIO_PREFIXES else tag


@dataclass(frozen=True)
class TagRecord:
    document_id: str
    span: Tuple[int, int]
    pos_tag: str
    pos_confidence: float
    chunk_tag: str
    chunk_confidence: float
    ner_tag: str
    ner_confidence: float

    def __post_init__(self):
        for name, vocab in (("pos_tag", POS_TAGS), ("chunk_tag", CHUNK_TAGS), ("ner_tag", NER_TAGS)):
            if getattr(self, name) not in vocab:
                raise ValueError(f"{name} {getattr(self, name)!r} not in vocabulary")
        for name in ("pos_confidence", "chunk_confidence", "ner_confidence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")


def load_tags(path: PathLike) -> Dict[Tuple[str, Tuple[int, int]], TagRecord]:
    """JSON lines keyed by (doc_id, (start, end)); BIO prefixes on chunk/NER tags are dropped."""
    out: Dict[Tuple[str, Tuple[int, int]], TagRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                r = json.loads(raw)
                rec = TagRecord(str(r["doc_id"]), (int(r["start"]), int(r["end"])), r["pos"], float(r["pos_conf"]),
                                _strip_bio(r["chunk"]), float(r["chunk_conf"]), _strip_bio(r["ner"]),
                                float(r["ner_conf"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise SnapshotFormatError(f"bad tag record: {exc}", lineno, path) from None
            out[(rec.document_id, rec.span)] = rec
    return out


def write_tags(records: Sequence[TagRecord], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"doc_id": r.document_id, "start": r.span[0], "end": r.span[1],
                                 "pos": r.pos_tag, "pos_conf": r.pos_confidence, "chunk": r.chunk_tag,
                                 "chunk_conf": r.chunk_confidence, "ner": r.ner_tag,
                                 "ner_conf": r.ner_confidence}) + "\n")


def _capitalized(anchor: str) -> bool:
    body = anchor.lstrip("#")
    return bool(body) and body[0].isupper()


def fallback_tag(annotation: Annotation) -> TagRecord:
    """Capitalization rules; a weak stand-in for a real tagger."""
    cap = _capitalized(annotation.anchor)
    return TagRecord(annotation.document_id, annotation.span, "NNP" if cap else "NN", 0.5, "NP", 0.5,
                     "LOC" if cap else "O", 0.6)


def fallback_tagger(doc: Document, annotations: Sequence[Annotation]) -> Dict[Tuple[str, Tuple[int, int]], TagRecord]:
    """Fallback tag record for every annotation of ``doc``."""
    return {(doc.id, a.span): fallback_tag(a) for a in annotations if a.document_id == doc.id}


# --------------------------------------------------------------------------
# contextual vectors


def _l2(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else v


class HashedContextEncoder:
    """Hashed character-trigram bag of a span plus five tokens either side.

    Deterministic and model-free. It only captures surface overlap, so it is
    a rough stand-in for a contextual language model.
    """

    def __init__(self, dim: int = 256, width: int = 5):
        self.dim = dim
        self.width = width

    def encode(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        padded = f"  {lower_chars(text)} "
        for i in range(len(padded) - 2):
            v[zlib.crc32(padded[i:i + 3].encode("utf-8")) % self.dim] += 1.0
        return _l2(v)

    def anchor_vector(self, annotation: Annotation, text: Optional[str]) -> Optional[np.ndarray]:
        if text is None:
            return self.encode(annotation.anchor)
        return self.encode(context_window(text, annotation.start, annotation.end, self.width))

    def mention_vector(self, entity_id: EntityId, kg: KnowledgeGraph) -> Optional[np.ndarray]:
        ent = kg.entity(entity_id)
        abstract = ent.short_abstract
        if not abstract:
            return None
        pos = lower_chars(abstract).find(lower_chars(ent.label))
        if pos < 0:
            return None
        return self.encode(context_window(abstract, pos, pos + len(ent.label), self.width))


class PrecomputedContextVectors:
    """Vectors produced offline: anchors keyed by (doc, span), mentions by IRI."""

    def __init__(self, anchors: Mapping[Tuple[str, Tuple[int, int]], np.ndarray],
                 mentions: Optional[EmbeddingStore] = None):
        self.anchors = dict(anchors)
        self.mentions = mentions

    def anchor_vector(self, annotation: Annotation, text: Optional[str]) -> Optional[np.ndarray]:
        return self.anchors.get((annotation.document_id, annotation.span))

    def mention_vector(self, entity_id: EntityId, kg: KnowledgeGraph) -> Optional[np.ndarray]:
        return None if self.mentions is None else self.mentions.get(entity_id)


def load_anchor_vectors(path: PathLike) -> Dict[Tuple[str, Tuple[int, int]], np.ndarray]:
    """``doc_id<TAB>start<TAB>end<TAB>v1 ... vd`` lines."""
    out: Dict[Tuple[str, Tuple[int, int]], np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise SnapshotFormatError("expected doc_id<TAB>start<TAB>end<TAB>vector", lineno, path)
            try:
                span = (int(parts[1]), int(parts[2]))
                vec = np.array([float(x) for x in parts[3].split()])
            except ValueError:
                raise SnapshotFormatError("non-numeric span or vector", lineno, path) from None
            if dim is None:
                dim = len(vec)
            if len(vec) != dim or not np.all(np.isfinite(vec)):
                raise SnapshotFormatError(f"vector must have {dim} finite components", lineno, path)
            out[(parts[0], span)] = vec
    return out


# --------------------------------------------------------------------------
# computation


@functools.lru_cache(maxsize=1)
def _default_ontology() -> Mapping[str, str]:
    return load_ontology()


def superclass_features(classes, ontology: Mapping[str, str]) -> Tuple[int, int]:
    """(bucket index, number of distinct ancestor classes below owl:Thing)."""
    ancestors = set()
    tops = set()
    for cls in classes:
        chain = class_ancestors(cls, ontology)
        ancestors.update(chain)
        top = chain[-1] if chain else cls
        tops.add(_TOP_BUCKET.get(top, len(SUPERCLASS_BUCKETS) - 1))
    bucket = min(tops) if tops else len(SUPERCLASS_BUCKETS) - 1
    return bucket, len(ancestors)


def _sim(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> float:
    if a is None or b is None or len(a) != len(b):
        return 0.0
    return cosine(a, b)


def compute_features(annotation: Annotation, candidate: Candidate, kg: KnowledgeGraph,
                     tags: Optional[TagRecord] = None, embeddings: Optional[EmbeddingStore] = None,
                     anchor_vectors=None, document_text: Optional[str] = None,
                     ontology: Optional[Mapping[str, str]] = None) -> FeatureVector:
    cand = kg.entity(candidate.entity)
    anchor = annotation.anchor
    start_label = kg.entities[annotation.start_entity].label if annotation.start_entity in kg.entities else ""
    label = cand.label

    n_tok_cand, len_cand = count_tokens(label), len(label)
    n_tok_anchor, len_anchor = count_tokens(anchor), len(anchor)
    edit_anchor = edit_distance(label, anchor)

    bucket, n_super = superclass_features(cand.classes, _default_ontology() if ontology is None else ontology)
    tag = tags if tags is not None else fallback_tag(annotation)

    rdf2vec = 0.0
    if embeddings is not None:
        s = embeddings.similarity(annotation.start_entity, candidate.entity)
        rdf2vec = 0.0 if s is None else s
    bert = 0.0
    if anchor_vectors is not None:
        bert = _sim(anchor_vectors.anchor_vector(annotation, document_text),
                    anchor_vectors.mention_vector(candidate.entity, kg))

    values = (
        annotation.confidence, candidate.hop, candidate.expansion_rank, candidate.expansion_rank_onlygeo,
        n_tok_cand, len_cand, edit_distance(start_label, label), n_tok_anchor, len_anchor,
        uppercase_count(anchor), edit_anchor, edit_anchor / len_anchor,
        n_tok_cand / max(n_tok_anchor, 1), len_cand / len_anchor,
        bucket, n_super, len(cand.classes), kg.degree.get(candidate.entity, 0),
        MISSING_PAGE_LENGTH if cand.page_length is None else cand.page_length,
        count_occurrences(anchor, cand.short_abstract), count_occurrences(anchor, cand.short_abstract, False),
        count_occurrences(anchor, cand.long_abstract), count_occurrences(anchor, cand.long_abstract, False),
        POS_TAGS.index(tag.pos_tag), CHUNK_TAGS.index(tag.chunk_tag), tag.pos_confidence, tag.chunk_confidence,
        NER_TAGS.index(tag.ner_tag), tag.ner_confidence,
        rdf2vec, bert,
    )
    return FeatureVector(tuple(float(v) for v in values))


# --------------------------------------------------------------------------
# encoding and export


@functools.lru_cache(maxsize=1)
def encoded_columns() -> Tuple[Tuple[str, str], ...]:
    """(logical feature, column name) for every column of the encoded matrix."""
    cols = []
    for name in FEATURE_NAMES:
        if name in CATEGORICAL:
            cols.extend((name, f"{name}={v}") for v in CATEGORICAL[name])
        else:
            cols.append((name, name))
    return tuple(cols)


def encode_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Numeric matrix with categorical features one-hot expanded."""
    rows = np.array([v.values for v in vectors], dtype=float).reshape(len(vectors), len(FEATURE_NAMES))
    blocks = []
    for j, name in enumerate(FEATURE_NAMES):
        col = rows[:, j]
        if name in CATEGORICAL:
            card = len(CATEGORICAL[name])
            onehot = np.zeros((len(rows), card))
            idx = col.astype(int)
            if np.any((idx < 0) | (idx >= card)) or np.any(idx != col):
                raise ValueError(f"invalid category index for {name}")
            onehot[np.arange(len(rows)), idx] = 1.0
            blocks.append(onehot)
        else:
            blocks.append(col[:, None])
    return np.hstack(blocks) if blocks else np.zeros((0, 0))


def write_feature_csv(vectors: Sequence[FeatureVector], labels: Optional[Sequence[float]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(FEATURE_NAMES) + (["label"] if labels is not None else []))
        for i, v in enumerate(vectors):
            w.writerow([repr(x) for x in v.values] + ([repr(float(labels[i]))] if labels is not None else []))
