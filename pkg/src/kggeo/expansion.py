"""Horizontal expansion: from a starting entity to an ordered vector of
geographic candidates.

Four strategies are provided, all returning only entities with coordinates:

* ``spelling``: closest labels by case-sensitive Levenshtein distance,
* ``latent-semantic``: largest cosine similarity of node embeddings,
* ``topological-spe`` / ``topological-lat``: breadth-first hop layers, each
  layer ordered by spelling or by latent similarity.

Final ties always fall back to IRI order. Every candidate records its hop
distance from the start and how many entities (all, and geographic only) the
strategy traversed before reaching it; the start itself counts as traversed.
"""

from __future__ import annotations

import enum
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .annotator import Annotation, Document
from .embeddings import EmbeddingStore, MissingVectorError
from .geo import geo_distance
from .kg import EntityId, GeoCoordinate, KnowledgeGraph, UnknownEntityError
from .text import BKTree, edit_distance

PathLike = Union[str, Path]

DEFAULT_MAX_HOPS = 6
CACHE_FORMAT = "kggeo-expansions/1"
# similarities equal to this many decimals are ties (BLAS may differ in the last ulp)
SIM_DECIMALS = 12


class Strategy(enum.Enum):
    SPELLING = "spelling"
    LATENT = "latent-semantic"
    TOPOLOGICAL_SPE = "topological-spe"
    TOPOLOGICAL_LAT = "topological-lat"


class Tiebreak(enum.Enum):
    SPELLING = "spelling"
    LATENT = "latent"


@dataclass(frozen=True)
class Candidate:
    entity: EntityId
    coordinate: GeoCoordinate
    hop: int
    expansion_rank: int
    expansion_rank_onlygeo: int


@dataclass(frozen=True)
class ExpansionConfig:
    strategy: Strategy = Strategy.TOPOLOGICAL_SPE
    size_L: int = 14
    max_hops: int = DEFAULT_MAX_HOPS

    def __post_init__(self):
        if self.size_L < 0:
            raise ValueError("size_L must be non-negative")
        if self.max_hops < 1:
            raise ValueError("max_hops must be at least 1")


def far_hop(max_hops: int) -> int:
    """Hop value recorded for candidates not reachable within ``max_hops``."""
    return max_hops + 1


def start_candidate(kg: KnowledgeGraph, start: EntityId) -> Optional[Candidate]:
    """The starting node as a hop-0 candidate, when it has coordinates."""
    coord = kg.geo_index.get(start)
    return None if coord is None else Candidate(start, coord, 0, 0, 0)


def _collect(kg: KnowledgeGraph, order: Iterable[EntityId], L: int,
             hops: Mapping[EntityId, int], max_hops: int) -> List[Candidate]:
    out: List[Candidate] = []
    n_geo = 0
    for rank, iri in enumerate(order):
        coord = kg.geo_index.get(iri)
        if coord is None:
            continue
        out.append(Candidate(iri, coord, hops.get(iri, far_hop(max_hops)), rank, n_geo))
        n_geo += 1
        if len(out) >= L:
            break
    return out


class SpellingIndex:
    """BK-tree over every entity label; exact top-L retrieval by nearest-first search."""

    def __init__(self, kg: KnowledgeGraph):
        self.tree = BKTree((e.label, iri) for iri, e in sorted(kg.entities.items()))

    def traversal(self, kg: KnowledgeGraph, label: str, L: int) -> List[Tuple[int, EntityId]]:
        """Sorted (distance, iri) prefix long enough to contain ``L`` geo entities.

        Entities tied with the L-th geographic one are kept so that the final
        (distance, iri) order is exact.
        """
        found: List[Tuple[int, EntityId]] = []
        n_geo = 0
        cutoff = None
        for d, _, payload in self.tree.nearest(label):
            if cutoff is not None and d > cutoff:
                break
            for iri in payload:
                found.append((d, iri))
                if iri in kg.geo_index:
                    n_geo += 1
            if cutoff is None and n_geo >= L:
                cutoff = d
        found.sort()
        return found


def expand_spelling(start: EntityId, L: int, kg: KnowledgeGraph, index: Optional[SpellingIndex] = None,
                    max_hops: int = DEFAULT_MAX_HOPS) -> List[Candidate]:
    label = kg.label(start)
    if L <= 0:
        return []
    index = index or SpellingIndex(kg)
    order = [iri for _, iri in index.traversal(kg, label, L)]
    return _collect(kg, order, L, kg.hop_distances(start, max_hops), max_hops)


def _latent_order(start: EntityId, kg: KnowledgeGraph, embeddings: EmbeddingStore) -> List[EntityId]:
    sims = np.round(embeddings.similarities_to(start), SIM_DECIMALS)
    keys = embeddings.keys
    # keys are sorted, so a stable sort on -similarity breaks ties by IRI
    idx = np.argsort(-sims, kind="stable")
    order = [start]
    for i in idx:
        k = keys[i]
        if k != start and k in kg.entities:
            order.append(k)
    return order


def expand_latent(start: EntityId, L: int, kg: KnowledgeGraph, embeddings: EmbeddingStore,
                  max_hops: int = DEFAULT_MAX_HOPS) -> List[Candidate]:
    if start not in kg.entities:
        raise UnknownEntityError(start)
    if start not in embeddings:
        raise MissingVectorError(f"no vector for {start}")
    if L <= 0:
        return []
    order = _latent_order(start, kg, embeddings)
    return _collect(kg, order, L, kg.hop_distances(start, max_hops), max_hops)


def _layer_key(tiebreak: Tiebreak, start: EntityId, start_label: str, kg: KnowledgeGraph,
               embeddings: Optional[EmbeddingStore]):
    if tiebreak is Tiebreak.SPELLING:
        return lambda iri: (edit_distance(start_label, kg.entities[iri].label), iri)

    def latent_key(iri):
        sim = embeddings.similarity(start, iri) if embeddings is not None else None
        return (1, 0.0, iri) if sim is None else (0, -round(sim, SIM_DECIMALS), iri)

    return latent_key


def expand_topological(start: EntityId, L: int, tiebreak: Tiebreak, kg: KnowledgeGraph,
                       embeddings: Optional[EmbeddingStore] = None,
                       max_hops: int = DEFAULT_MAX_HOPS) -> List[Candidate]:
    start_label = kg.label(start)
    if L <= 0:
        return []
    key = _layer_key(Tiebreak(tiebreak), start, start_label, kg, embeddings)
    out: List[Candidate] = []
    visited: Set[EntityId] = {start}
    layer = [start]
    rank = n_geo = 0
    for hop in range(max_hops + 1):
        for iri in sorted(layer, key=key):
            coord = kg.geo_index.get(iri)
            if coord is not None:
                out.append(Candidate(iri, coord, hop, rank, n_geo))
                n_geo += 1
                if len(out) >= L:
                    return out
            rank += 1
        nxt: Set[EntityId] = set()
        for u in layer:
            for v in kg.adjacency.get(u, ()):
                if v not in visited:
                    nxt.add(v)
        if not nxt:
            break
        visited.update(nxt)
        layer = list(nxt)
    return out


def expand(start: EntityId, config: ExpansionConfig, kg: KnowledgeGraph,
           embeddings: Optional[EmbeddingStore] = None, index: Optional[SpellingIndex] = None) -> List[Candidate]:
    s, L, h = config.strategy, config.size_L, config.max_hops
    if s is Strategy.SPELLING:
        return expand_spelling(start, L, kg, index, h)
    if s is Strategy.LATENT:
        if embeddings is None:
            raise ValueError("latent-semantic expansion needs an embedding store")
        return expand_latent(start, L, kg, embeddings, h)
    tb = Tiebreak.SPELLING if s is Strategy.TOPOLOGICAL_SPE else Tiebreak.LATENT
    return expand_topological(start, L, tb, kg, embeddings, h)


# --------------------------------------------------------------------------
# precomputed tables


class CacheError(ValueError):
    """Expansion cache is truncated, corrupt or belongs to another graph."""


@dataclass
class ExpansionTable:
    strategy: Strategy
    size_L: int
    max_hops: int
    kg_checksum: str
    entries: Dict[EntityId, Tuple[Candidate, ...]]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, iri: object) -> bool:
        return iri in self.entries

    def lookup(self, iri: EntityId, L: Optional[int] = None) -> Tuple[Candidate, ...]:
        cands = self.entries[iri]
        if L is None:
            return cands
        if L > self.size_L:
            raise ValueError(f"table holds {self.size_L} candidates per entity, {L} requested")
        return cands[:L]

    def _body_lines(self) -> List[str]:
        lines = []
        for iri in sorted(self.entries):
            rows = [[c.entity, c.coordinate.lat, c.coordinate.lon, c.hop, c.expansion_rank,
                     c.expansion_rank_onlygeo] for c in self.entries[iri]]
            lines.append(json.dumps([iri, rows], ensure_ascii=False, separators=(",", ":")))
        return lines

    def save(self, path: PathLike) -> None:
        body = self._body_lines()
        digest = hashlib.sha256("\n".join(body).encode("utf-8")).hexdigest()
        header = {"format": CACHE_FORMAT, "strategy": self.strategy.value, "L": self.size_L,
                  "max_hops": self.max_hops, "kg_checksum": self.kg_checksum,
                  "entries": len(body), "body_sha256": digest}
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(header, sort_keys=True) + "\n")
                for line in body:
                    fh.write(line + "\n")
        except OSError as exc:
            raise CacheError(f"cannot write expansion cache {path}: {exc}") from exc

    @classmethod
    def load(cls, path: PathLike, kg: Optional[KnowledgeGraph] = None) -> "ExpansionTable":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise CacheError(f"{path}: empty expansion cache")
        try:
            header = json.loads(lines[0])
        except ValueError:
            raise CacheError(f"{path}: unreadable header") from None
        if header.get("format") != CACHE_FORMAT:
            raise CacheError(f"{path}: not an expansion cache")
        body = lines[1:]
        digest = hashlib.sha256("\n".join(body).encode("utf-8")).hexdigest()
        if len(body) != header["entries"] or digest != header["body_sha256"]:
            raise CacheError(f"{path}: partial or corrupt table "
                             f"({len(body)} of {header['entries']} entries)")
        if kg is not None and header["kg_checksum"] != kg.checksum():
            raise CacheError(f"{path}: cache was built from a different knowledge graph")
        entries: Dict[EntityId, Tuple[Candidate, ...]] = {}
        for line in body:
            iri, rows = json.loads(line)
            entries[iri] = tuple(Candidate(r[0], GeoCoordinate(r[1], r[2]), r[3], r[4], r[5]) for r in rows)
        return cls(Strategy(header["strategy"]), header["L"], header["max_hops"], header["kg_checksum"], entries)


def precompute_expansions(kg: KnowledgeGraph, config: ExpansionConfig,
                          embeddings: Optional[EmbeddingStore] = None, threads: int = 1,
                          cache_path: Optional[PathLike] = None) -> ExpansionTable:
    """Expansion of every entity; entities without a vector get empty latent entries."""
    index = SpellingIndex(kg) if config.strategy is Strategy.SPELLING else None
    if config.strategy is Strategy.LATENT and embeddings is None:
        raise ValueError("latent-semantic expansion needs an embedding store")

    def one(iri: EntityId) -> Tuple[EntityId, Tuple[Candidate, ...]]:
        if config.strategy is Strategy.LATENT and iri not in embeddings:
            return iri, ()
        return iri, tuple(expand(iri, config, kg, embeddings, index))

    ids = kg.sorted_ids()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(iri) for iri in ids]
    table = ExpansionTable(config.strategy, config.size_L, config.max_hops, kg.checksum(), dict(results))
    if cache_path is not None:
        table.save(cache_path)
    return table


# --------------------------------------------------------------------------
# strategy evaluation


def candidate_pool(kg: KnowledgeGraph, table: Union[ExpansionTable, Mapping[EntityId, Sequence[Candidate]]],
                   start: EntityId, L: int) -> List[Candidate]:
    """Candidates considered for one annotation at expansion size ``L``.

    ``L = 0`` means no expansion: only the starting node, if geographic.
    Otherwise the first ``L`` table entries.
    """
    if L <= 0:
        c = start_candidate(kg, start)
        return [c] if c else []
    if isinstance(table, ExpansionTable):
        return list(table.lookup(start, L))
    return list(table[start][:L])


def max_theoretical_recall(table, documents: Sequence[Document], annotations: Mapping[str, Sequence[Annotation]],
                           L: int, threshold_T: float, kg: KnowledgeGraph) -> float:
    """Share of ground-truth locations that some retrieved candidate lies within T of.

    The starting node counts at every L, which keeps the curve monotone even
    when a strategy's first slots are not the start itself.
    """
    total = covered = 0
    for doc in documents:
        if not doc.ground_truth:
            continue
        total += len(doc.ground_truth)
        coords = []
        for ann in annotations.get(doc.id, ()):
            if ann.start_entity not in kg.entities:
                continue
            if L > 0 and ann.start_entity not in table:
                raise KeyError(f"start entity {ann.start_entity} missing from expansion table")
            pool = candidate_pool(kg, table, ann.start_entity, 0)
            if L > 0:
                pool += candidate_pool(kg, table, ann.start_entity, L)
            coords.extend(c.coordinate for c in pool)
        for truth in doc.ground_truth:
            if any(geo_distance(truth.coordinate, c) < threshold_T for c in coords):
                covered += 1
    return covered / total if total else 0.0


def jaccard_distance(a: Iterable, b: Iterable) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)
