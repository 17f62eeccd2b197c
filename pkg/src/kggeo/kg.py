"""Knowledge-graph snapshot store.

The snapshot is a line-oriented, tab-separated UTF-8 file::

    E  iri  label
    P  iri  predicate  value        (value starting with '@' is an IRI object)
    C  iri  class-iri
    S  iri  equivalent-iri
    A  iri  short|long  abstract-text
    L  iri  page_length

Object-property edges are symmetrized into an undirected adjacency view.
Predicates and classes are compacted to CURIEs (``geo:lat``, ``dbo:City``)
so that configuration files can use the short forms.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)

EntityId = str
PathLike = Union[str, Path]

PREFIXES: Dict[str, str] = {
    "geo": "http://www.w3.org/2003/01/geo/wgs84_pos#",
    "georss": "http://www.georss.org/georss/",
    "dbo": "http://dbpedia.org/ontology/",
    "dbp": "http://dbpedia.org/property/",
    "dbr": "http://dbpedia.org/resource/",
    "owl": "http://www.w3.org/2002/07/owl#",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "schema": "http://schema.org/",
    "gn": "http://www.geonames.org/ontology#",
    "wdt": "http://www.wikidata.org/prop/direct/",
    "foaf": "http://xmlns.com/foaf/0.1/",
}

OWL_THING = "owl:Thing"


def compact_iri(iri: str) -> str:
    for prefix, ns in PREFIXES.items():
        if iri.startswith(ns):
            return f"{prefix}:{iri[len(ns):]}"
    return iri


class SnapshotFormatError(ValueError):
    """Malformed knowledge-graph or configuration file."""

    def __init__(self, message: str, lineno: Optional[int] = None, path: Optional[PathLike] = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)
        self.lineno = lineno


class UnknownEntityError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class GeoCoordinate:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass
class Entity:
    id: EntityId
    label: str
    predicates: Dict[str, List[str]] = field(default_factory=dict)
    classes: FrozenSet[str] = frozenset()
    short_abstract: Optional[str] = None
    long_abstract: Optional[str] = None
    page_length: Optional[int] = None
    same_as: Tuple[EntityId, ...] = ()

    def values(self, predicate: str) -> List[str]:
        return self.predicates.get(predicate, [])


class Granularity(enum.Enum):
    POI = "POI"
    CITY = "City"
    REGION_OR_COUNTY = "RegionOrCounty"
    COUNTRY = "Country"
    UNKNOWN = "Unknown"


# most specific first
_SPECIFICITY = [Granularity.POI, Granularity.CITY, Granularity.REGION_OR_COUNTY, Granularity.COUNTRY]


# --------------------------------------------------------------------------
# geographic predicate rules


@dataclass(frozen=True)
class GeoRule:
    """One entry of the geographic predicate priority list."""

    name: str
    kind: str  # "point", "pair" or "dms"
    predicates: Tuple[str, ...]


_RULE_RE = re.compile(r"^(?P<name>.+):(?P<kind>point|pair|dms)(?:\((?P<args>[^)]*)\))?$")


def parse_geo_rule(line: str) -> GeoRule:
    m = _RULE_RE.match(line)
    if m and ":" in m.group("name"):
        name, kind, args = m.group("name"), m.group("kind"), m.group("args")
        preds = tuple(compact_iri(a.strip()) for a in args.split(",")) if args else ()
        name = compact_iri(name)
        if kind == "point":
            preds = preds or (name,)
            if len(preds) != 1:
                raise ValueError(f"point rule takes one predicate: {line!r}")
        elif kind == "pair":
            if len(preds) != 2:
                raise ValueError(f"pair rule takes two predicates: {line!r}")
        elif len(preds) != 8:
            raise ValueError(f"dms rule takes eight predicates: {line!r}")
        return GeoRule(name, kind, preds)
    pred = compact_iri(line)
    return GeoRule(pred, "point", (pred,))


def load_geo_rules(path: Optional[PathLike] = None) -> List[GeoRule]:
    """Read a geo-predicate config; ``None`` loads the shipped default list."""
    if path is None:
        text = resources.files("kggeo.data").joinpath("geo_predicates.txt").read_text("utf-8")
        source: PathLike = "geo_predicates.txt"
    else:
        text = Path(path).read_text("utf-8")
        source = path
    rules = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rules.append(parse_geo_rule(line))
        except ValueError as exc:
            raise SnapshotFormatError(str(exc), lineno, source) from None
    if not rules:
        raise SnapshotFormatError("empty geographic predicate list", None, source)
    return rules


_NUM_RE = re.compile(r"[-+]?\d+(?:[.,]\d+)?(?:[eE][-+]?\d+)?")
_HEMI_RE = re.compile(r"(?<![A-Za-z])([NSEWnsew])(?![A-Za-z])")


def _clean_literal(value: str) -> str:
    value = value.strip()
    if "^^" in value:
        value = value.split("^^", 1)[0]
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        value = value[1:-1]
    return value.strip()


def parse_angle(value: str, axis: str) -> Optional[float]:
    """Decimal or degrees/minutes/seconds literal to signed decimal degrees.

    ``axis`` is ``"lat"`` or ``"lon"``; a hemisphere letter that does not fit
    the axis makes the literal unparsable.
    """
    text = _clean_literal(value)
    if not text:
        return None
    hemi = None
    hm = _HEMI_RE.findall(text)
    if len(hm) > 1:
        return None
    if hm:
        hemi = hm[0].upper()
        if (axis == "lat" and hemi not in "NS") or (axis == "lon" and hemi not in "EW"):
            return None
    nums = _NUM_RE.findall(text)
    if not 1 <= len(nums) <= 3:
        return None
    try:
        parts = [float(n.replace(",", ".")) for n in nums]
    except ValueError:
        return None
    deg = parts[0]
    minutes = parts[1] if len(parts) > 1 else 0.0
    seconds = parts[2] if len(parts) > 2 else 0.0
    if len(parts) > 1 and (minutes < 0 or seconds < 0 or minutes >= 60 or seconds >= 60):
        return None
    negative = deg < 0 or text.startswith("-") or hemi in ("S", "W")
    dd = abs(deg) + minutes / 60.0 + seconds / 3600.0
    return -dd if negative else dd


def _dms_from_parts(deg: Optional[str], minutes: Optional[str], seconds: Optional[str],
                    hemi: Optional[str], axis: str) -> Optional[float]:
    if deg is None:
        return None
    pieces = [_clean_literal(deg)]
    for extra in (minutes, seconds):
        pieces.append(_clean_literal(extra) if extra is not None else "0")
    if hemi is not None:
        pieces.append(_clean_literal(hemi))
    return parse_angle(" ".join(pieces), axis)


def _parse_point(value: str) -> Optional[Tuple[float, float]]:
    text = _clean_literal(value)
    wkt = re.match(r"^\s*point\s*\(\s*(\S+)\s+(\S+)\s*\)\s*$", text, re.IGNORECASE)
    if wkt:
        lon_s, lat_s = wkt.group(1), wkt.group(2)
    else:
        parts = [p for p in re.split(r"[\s,;]+", text) if p]
        if len(parts) != 2:
            return None
        lat_s, lon_s = parts
    try:
        return float(lat_s), float(lon_s)
    except ValueError:
        return None


def _first(entity: Entity, predicate: str) -> Optional[str]:
    vals = entity.predicates.get(predicate)
    return vals[0] if vals else None


def _apply_rule(entity: Entity, rule: GeoRule) -> Tuple[Optional[Tuple[float, float]], bool]:
    """(lat, lon) or None, plus whether the rule matched but was out of range."""
    if rule.kind == "point":
        values = entity.predicates.get(rule.predicates[0], [])
        out_of_range = False
        for v in values:
            pt = _parse_point(v)
            if pt is None:
                continue
            if _in_range(*pt):
                return pt, False
            out_of_range = True
        return None, out_of_range
    if rule.kind == "pair":
        lat_v, lon_v = _first(entity, rule.predicates[0]), _first(entity, rule.predicates[1])
        if lat_v is None or lon_v is None:
            return None, False
        lat, lon = parse_angle(lat_v, "lat"), parse_angle(lon_v, "lon")
    else:
        p = rule.predicates
        lat = _dms_from_parts(_first(entity, p[0]), _first(entity, p[1]), _first(entity, p[2]),
                              _first(entity, p[3]), "lat")
        lon = _dms_from_parts(_first(entity, p[4]), _first(entity, p[5]), _first(entity, p[6]),
                              _first(entity, p[7]), "lon")
    if lat is None or lon is None:
        return None, False
    if not _in_range(lat, lon):
        return None, True
    return (lat, lon), False


def _in_range(lat: float, lon: float) -> bool:
    return math.isfinite(lat) and math.isfinite(lon) and -90 <= lat <= 90 and -180 <= lon <= 180


def _parse_geo(entity: Entity, rules: Sequence[GeoRule]) -> Tuple[Optional[GeoCoordinate], int]:
    rejected = 0
    for rule in rules:
        pt, bad = _apply_rule(entity, rule)
        if pt is not None:
            return GeoCoordinate(pt[0], pt[1]), rejected
        rejected += bad
    return None, rejected


def parse_geo_coordinates(entity: Entity, geo_predicates: Optional[Sequence[GeoRule]] = None) -> Optional[GeoCoordinate]:
    """First rule, in priority order, yielding a complete in-range coordinate."""
    rules = load_geo_rules() if geo_predicates is None else geo_predicates
    if not rules:
        raise ValueError("geo_predicates must be non-empty")
    return _parse_geo(entity, rules)[0]


# --------------------------------------------------------------------------
# ontology configuration


def _read_tsv_map(name: str, path: Optional[PathLike]) -> Dict[str, str]:
    if path is None:
        text = resources.files("kggeo.data").joinpath(name).read_text("utf-8")
        source: PathLike = name
    else:
        text = Path(path).read_text("utf-8")
        source = path
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SnapshotFormatError("expected two tab-separated fields", lineno, source)
        out[compact_iri(parts[0].strip())] = parts[1].strip()
    return out


def load_granularity_map(path: Optional[PathLike] = None) -> Dict[str, Granularity]:
    raw = _read_tsv_map("granularity.tsv", path)
    try:
        return {cls: Granularity(level) for cls, level in raw.items()}
    except ValueError as exc:
        raise SnapshotFormatError(f"unknown granularity level: {exc}") from None


def load_ontology(path: Optional[PathLike] = None) -> Dict[str, str]:
    """Class -> parent class map."""
    return {cls: compact_iri(parent) for cls, parent in _read_tsv_map("ontology.tsv", path).items()}


def granularity_of(entity: Entity, ontology_map: Optional[Mapping[str, Granularity]] = None) -> Granularity:
    """Most specific granularity level among the entity's classes."""
    mapping = load_granularity_map() if ontology_map is None else ontology_map
    levels = {mapping[c] for c in entity.classes if c in mapping}
    for level in _SPECIFICITY:
        if level in levels:
            return level
    return Granularity.UNKNOWN


def class_ancestors(cls: str, ontology: Mapping[str, str]) -> List[str]:
    """Ancestors of ``cls`` below owl:Thing, nearest first."""
    out: List[str] = []
    seen = {cls}
    cur = ontology.get(cls)
    while cur is not None and cur != OWL_THING and cur not in seen:
        out.append(cur)
        seen.add(cur)
        cur = ontology.get(cur)
    return out


# --------------------------------------------------------------------------
# the graph


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: Mapping[EntityId, Entity]
    adjacency: Mapping[EntityId, Tuple[EntityId, ...]]
    geo_index: Mapping[EntityId, GeoCoordinate]
    degree: Mapping[EntityId, int]
    geo_warnings: int = 0

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, iri: object) -> bool:
        return iri in self.entities

    def entity(self, iri: EntityId) -> Entity:
        try:
            return self.entities[iri]
        except KeyError:
            raise UnknownEntityError(iri) from None

    def label(self, iri: EntityId) -> str:
        return self.entity(iri).label

    def neighbors(self, iri: EntityId) -> Tuple[EntityId, ...]:
        return self.adjacency.get(iri, ())

    def is_geo(self, iri: EntityId) -> bool:
        return iri in self.geo_index

    def sorted_ids(self) -> List[EntityId]:
        return sorted(self.entities)

    def hop_distances(self, start: EntityId, max_hops: int) -> Dict[EntityId, int]:
        """Shortest-path hop counts from ``start`` over the undirected view."""
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if dist[u] >= max_hops:
                continue
            for v in self.adjacency.get(u, ()):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def same_as_closure(self, start: EntityId, max_depth: int = 3) -> List[EntityId]:
        """Breadth-first closure over sameAs links, start excluded.

        Links may point outside the graph; such targets are returned but have
        no outgoing links of their own.
        """
        if start not in self.entities:
            raise UnknownEntityError(start)
        if max_depth < 1:
            raise ValueError("max_depth must be positive")
        visited = {start}
        frontier = [start]
        out: List[EntityId] = []
        for _ in range(max_depth):
            layer = set()
            for u in frontier:
                ent = self.entities.get(u)
                if ent is None:
                    continue
                for v in ent.same_as:
                    if v not in visited:
                        layer.add(v)
            if not layer:
                break
            ordered = sorted(layer)
            visited.update(ordered)
            out.extend(ordered)
            frontier = ordered
        return out

    def checksum(self) -> str:
        """Content hash, stable across loads of the same snapshot."""
        h = hashlib.sha256()
        for iri in sorted(self.entities):
            e = self.entities[iri]
            h.update(f"E\t{iri}\t{e.label}\n".encode())
            for p in sorted(e.predicates):
                for v in e.predicates[p]:
                    h.update(f"P\t{p}\t{v}\n".encode())
            for c in sorted(e.classes):
                h.update(f"C\t{c}\n".encode())
            for s in e.same_as:
                h.update(f"S\t{s}\n".encode())
            h.update(f"A\t{e.short_abstract}\t{e.long_abstract}\tL\t{e.page_length}\n".encode())
            h.update(("N\t" + " ".join(self.adjacency.get(iri, ())) + "\n").encode())
        return h.hexdigest()


def same_as_closure(kg: KnowledgeGraph, start: EntityId, max_depth: int = 3) -> List[EntityId]:
    return kg.same_as_closure(start, max_depth)


def build_graph(entities: Iterable[Entity], geo_rules: Optional[Sequence[GeoRule]] = None) -> KnowledgeGraph:
    """Assemble a graph from entities; '@'-prefixed predicate values become edges."""
    rules = load_geo_rules() if geo_rules is None else list(geo_rules)
    ents: Dict[EntityId, Entity] = {}
    for e in entities:
        if e.id in ents:
            raise ValueError(f"duplicate entity id {e.id}")
        ents[e.id] = e
    adj: Dict[EntityId, set] = defaultdict(set)
    degree: Dict[EntityId, int] = {iri: 0 for iri in ents}
    for iri, e in ents.items():
        for vals in e.predicates.values():
            for v in vals:
                if not v.startswith("@"):
                    continue
                target = v[1:]
                if target == iri or target not in ents:
                    continue
                adj[iri].add(target)
                adj[target].add(iri)
                degree[iri] += 1
                degree[target] += 1
    geo: Dict[EntityId, GeoCoordinate] = {}
    warnings = 0
    for iri in sorted(ents):
        coord, rejected = _parse_geo(ents[iri], rules)
        warnings += rejected
        if coord is not None:
            geo[iri] = coord
    if warnings:
        logger.warning("%d geographic values rejected as out of range", warnings)
    adjacency = {iri: tuple(sorted(adj[iri])) for iri in sorted(ents)}
    return KnowledgeGraph(ents, adjacency, geo, degree, warnings)


def load_knowledge_graph(path: PathLike, geo_predicate_config: Optional[PathLike] = None) -> KnowledgeGraph:
    rules = load_geo_rules(geo_predicate_config)
    labels: Dict[EntityId, str] = {}
    first_line: Dict[EntityId, int] = {}
    preds: Dict[EntityId, Dict[str, List[str]]] = defaultdict(lambda: defaultdict(list))
    classes: Dict[EntityId, set] = defaultdict(set)
    same: Dict[EntityId, List[str]] = defaultdict(list)
    abstracts: Dict[EntityId, Dict[str, str]] = defaultdict(dict)
    lengths: Dict[EntityId, int] = {}
    refs: List[Tuple[int, EntityId]] = []

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            kind = parts[0]
            expected = {"E": 3, "P": 4, "C": 3, "S": 3, "A": 4, "L": 3}.get(kind)
            if expected is None:
                raise SnapshotFormatError(f"unknown record type {kind!r}", lineno, path)
            if len(parts) != expected:
                raise SnapshotFormatError(f"{kind} record needs {expected} fields, got {len(parts)}", lineno, path)
            iri = parts[1]
            if not iri:
                raise SnapshotFormatError("empty entity IRI", lineno, path)
            if kind == "E":
                if iri in labels:
                    raise SnapshotFormatError(f"duplicate entity {iri} (first at line {first_line[iri]})", lineno, path)
                if not parts[2]:
                    raise SnapshotFormatError(f"empty label for {iri}", lineno, path)
                labels[iri] = parts[2]
                first_line[iri] = lineno
                continue
            refs.append((lineno, iri))
            if kind == "P":
                preds[iri][compact_iri(parts[2])].append(parts[3])
            elif kind == "C":
                classes[iri].add(compact_iri(parts[2]))
            elif kind == "S":
                if parts[2] and parts[2] != iri and parts[2] not in same[iri]:
                    same[iri].append(parts[2])
            elif kind == "A":
                if parts[2] not in ("short", "long"):
                    raise SnapshotFormatError(f"abstract kind must be short|long, got {parts[2]!r}", lineno, path)
                abstracts[iri][parts[2]] = parts[3]
            else:
                try:
                    n = int(parts[2])
                except ValueError:
                    raise SnapshotFormatError(f"page length not an integer: {parts[2]!r}", lineno, path) from None
                if n < 0:
                    raise SnapshotFormatError("negative page length", lineno, path)
                lengths[iri] = n

    for lineno, iri in refs:
        if iri not in labels:
            raise SnapshotFormatError(f"record for undeclared entity {iri}", lineno, path)

    entities = []
    for iri, label in labels.items():
        entities.append(Entity(
            id=iri,
            label=label,
            predicates={p: list(v) for p, v in preds[iri].items()} if iri in preds else {},
            classes=frozenset(classes.get(iri, ())),
            short_abstract=abstracts.get(iri, {}).get("short"),
            long_abstract=abstracts.get(iri, {}).get("long"),
            page_length=lengths.get(iri),
            same_as=tuple(same.get(iri, ())),
        ))
    return build_graph(entities, rules)


def write_knowledge_graph(kg: KnowledgeGraph, path: PathLike) -> None:
    """Serialize to the snapshot format; predicates are written as CURIEs."""
    with open(path, "w", encoding="utf-8") as fh:
        for iri in sorted(kg.entities):
            e = kg.entities[iri]
            fh.write(f"E\t{iri}\t{e.label}\n")
            for p in sorted(e.predicates):
                for v in e.predicates[p]:
                    fh.write(f"P\t{iri}\t{p}\t{v}\n")
            for c in sorted(e.classes):
                fh.write(f"C\t{iri}\t{c}\n")
            for s in e.same_as:
                fh.write(f"S\t{iri}\t{s}\n")
            if e.short_abstract is not None:
                fh.write(f"A\t{iri}\tshort\t{e.short_abstract}\n")
            if e.long_abstract is not None:
                fh.write(f"A\t{iri}\tlong\t{e.long_abstract}\n")
            if e.page_length is not None:
                fh.write(f"L\t{iri}\t{e.page_length}\n")


def toy_graph_path() -> Path:
    """Path of the shipped bath/Bath toy snapshot."""
    return Path(str(resources.files("kggeo.data").joinpath("toy_bath.kg")))
