"""Semantic annotation: anchors in text linked to starting entities.

Two sources are supported: a surface-form lexicon built from the graph labels
(optionally weighted by an alias-count file), and JSON-lines annotation files
produced by an external annotator.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .kg import EntityId, GeoCoordinate, KnowledgeGraph, SnapshotFormatError
from .text import lower_chars, normalize_form, tokenize

PathLike = Union[str, Path]


@dataclass(frozen=True)
class GroundTruth:
    coordinate: GeoCoordinate
    entity: Optional[EntityId] = None


@dataclass
class Document:
    id: str
    text: str
    ground_truth: List[GroundTruth] = field(default_factory=list)


@dataclass(frozen=True)
class Annotation:
    document_id: str
    anchor: str
    start: int
    end: int
    start_entity: EntityId
    confidence: float

    def __post_init__(self):
        if not self.anchor:
            raise ValueError("empty anchor")
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span ({self.start}, {self.end})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Lexicon:
    """Lowercased surface form -> candidates sorted by (-commonness, iri)."""

    surface_forms: Mapping[str, Tuple[Tuple[EntityId, float], ...]]
    max_form_tokens: int = 1

    def __contains__(self, form: object) -> bool:
        return form in self.surface_forms

    def __len__(self) -> int:
        return len(self.surface_forms)

    def candidates(self, form: str) -> Tuple[Tuple[EntityId, float], ...]:
        return self.surface_forms.get(form, ())


def read_alias_file(path: PathLike) -> List[Tuple[str, EntityId, int]]:
    """Rows of ``form<TAB>iri<TAB>count``."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0].strip() or not parts[1]:
                raise SnapshotFormatError("expected form<TAB>iri<TAB>count", lineno, path)
            try:
                count = int(parts[2])
            except ValueError:
                raise SnapshotFormatError(f"count is not an integer: {parts[2]!r}", lineno, path) from None
            if count < 0:
                raise SnapshotFormatError("negative count", lineno, path)
            rows.append((parts[0], parts[1], count))
    return rows


def build_lexicon(kg: KnowledgeGraph, alias_file: Optional[PathLike] = None,
                  alias_rows: Optional[Iterable[Tuple[str, EntityId, int]]] = None) -> Lexicon:
    """Every label becomes a form; alias counts, when given, set the commonness.

    Counts come from ``alias_file`` and/or in-memory ``alias_rows`` of
    (form, iri, count).
    """
    by_form: Dict[str, set] = defaultdict(set)
    for iri, ent in kg.entities.items():
        form = normalize_form(ent.label)
        if form:
            by_form[form].add(iri)

    counts: Dict[str, Dict[EntityId, int]] = defaultdict(dict)
    rows: List[Tuple[str, EntityId, int]] = []
    if alias_file is not None:
        rows.extend(read_alias_file(alias_file))
    if alias_rows is not None:
        rows.extend(alias_rows)
    if rows:
        for form_raw, iri, count in rows:
            form = normalize_form(form_raw)
            if not form or iri not in kg.entities:
                continue
            counts[form][iri] = counts[form].get(iri, 0) + count
            by_form[form].add(iri)

    forms: Dict[str, Tuple[Tuple[EntityId, float], ...]] = {}
    max_tokens = 1
    for form in sorted(by_form):
        members = sorted(by_form[form])
        if form in counts:
            total = sum(counts[form].values())
            scored = [(iri, counts[form].get(iri, 0) / total if total else 1.0 / len(members))
                      for iri in members]
        else:
            scored = [(iri, 1.0 / len(members)) for iri in members]
        scored.sort(key=lambda x: (-x[1], x[0]))
        forms[form] = tuple(scored)
        max_tokens = max(max_tokens, len(tokenize(form)))
    return Lexicon(forms, max_tokens)


def annotate(doc: Document, lexicon: Lexicon) -> List[Annotation]:
    """Greedy leftmost-longest, case-insensitive match over token n-grams."""
    text = doc.text
    tokens = tokenize(text)
    out: List[Annotation] = []
    i = 0
    while i < len(tokens):
        matched = 0
        top = min(lexicon.max_form_tokens, len(tokens) - i)
        for n in range(top, 0, -1):
            s, e = tokens[i].start, tokens[i + n - 1].end
            cands = lexicon.candidates(lower_chars(text[s:e]))
            if not cands:
                continue
            iri, commonness = cands[0]
            if s > 0 and text[s - 1] == "#":
                s -= 1
            out.append(Annotation(doc.id, text[s:e], s, e, iri, float(commonness)))
            matched = n
            break
        i += matched or 1
    return out


def _document_index(documents: Optional[Iterable[Document]]) -> Optional[Dict[str, str]]:
    if documents is None:
        return None
    if isinstance(documents, Mapping):
        return {k: (v.text if isinstance(v, Document) else v) for k, v in documents.items()}
    return {d.id: d.text for d in documents}


def load_annotations(path: PathLike, documents: Optional[Iterable[Document]] = None) -> List[Annotation]:
    """Parse a JSON-lines annotation file, validating spans when texts are given."""
    texts = _document_index(documents)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                doc_id, anchor = str(rec["doc_id"]), rec["anchor"]
                start, end = int(rec["start"]), int(rec["end"])
                iri, conf = rec["entity_iri"], float(rec["confidence"])
            except (ValueError, KeyError, TypeError) as exc:
                raise SnapshotFormatError(f"bad annotation record: {exc}", lineno, path) from None
            if not 0.0 <= conf <= 1.0:
                raise SnapshotFormatError(f"confidence {conf} outside [0, 1]", lineno, path)
            if texts is not None:
                if doc_id not in texts:
                    raise SnapshotFormatError(f"annotation for unknown document {doc_id}", lineno, path)
                if texts[doc_id][start:end] != anchor:
                    raise SnapshotFormatError(f"span ({start}, {end}) does not match anchor {anchor!r} "
                                              f"in document {doc_id}", lineno, path)
            try:
                out.append(Annotation(doc_id, anchor, start, end, iri, conf))
            except ValueError as exc:
                raise SnapshotFormatError(str(exc), lineno, path) from None
    return out


def write_annotations(annotations: Sequence[Annotation], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(json.dumps({"doc_id": a.document_id, "anchor": a.anchor, "start": a.start,
                                 "end": a.end, "entity_iri": a.start_entity,
                                 "confidence": a.confidence}, ensure_ascii=False) + "\n")


def group_by_document(annotations: Iterable[Annotation]) -> Dict[str, List[Annotation]]:
    grouped: Dict[str, List[Annotation]] = defaultdict(list)
    for a in annotations:
        grouped[a.document_id].append(a)
    for v in grouped.values():
        v.sort(key=lambda a: (a.start, a.end))
    return dict(grouped)
