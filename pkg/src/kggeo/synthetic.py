"""Generators for test graphs and a synthetic geoparsing benchmark.

``random_graph`` produces small graphs with deliberately tie-prone labels and
duplicated embedding vectors, for checking expansion strategies against
brute-force references.

``generate_corpus`` builds a gazetteer (countries, regions, cities, points of
interest) enriched with non-geographic entities, plus template documents
whose ground truth is known. Some city names are shadowed by a more common
non-geographic homonym, mirroring the bath/Bath situation. The annotator then
links the mention to the wrong entity, and only graph expansion can recover
the city.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .annotator import Document, GroundTruth, Lexicon, build_lexicon
from .embeddings import EmbeddingStore
from .kg import Entity, KnowledgeGraph, build_graph

EX = "http://example.org/resource/"


def _point(lat: float, lon: float) -> List[str]:
    return [f"{lat:.6f} {lon:.6f}"]


# --------------------------------------------------------------------------
# random graphs


def random_graph(seed: int, n_nodes: Optional[int] = None, geo_fraction: Optional[float] = None,
                 mean_degree: float = 3.0, dim: int = 6, vector_coverage: float = 0.9
                 ) -> Tuple[KnowledgeGraph, EmbeddingStore]:
    """Random graph of at most 200 nodes with at most 40% geo-tagged.

    Labels are short strings over a tiny alphabet, so edit-distance ties are
    common; about a fifth of the vectors duplicate another node's vector, so
    cosine ties occur too.
    """
    rng = np.random.default_rng(seed)
    n = int(n_nodes if n_nodes is not None else rng.integers(3, 201))
    frac = float(geo_fraction if geo_fraction is not None else rng.uniform(0.05, 0.4))
    ids = [f"{EX}n{i:03d}" for i in range(n)]
    n_geo = max(1, int(n * frac))
    geo = set(rng.choice(n, size=n_geo, replace=False).tolist())
    p_edge = min(1.0, mean_degree / max(n - 1, 1))
    links: Dict[int, List[str]] = {i: [] for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                links[i].append("@" + ids[j])
    entities = []
    for i in range(n):
        length = int(rng.integers(1, 5))
        label = "".join(rng.choice(list("abAB"), size=length).tolist())
        preds = {"dbo:wikiPageWikiLink": links[i]} if links[i] else {}
        if i in geo:
            preds["georss:point"] = _point(rng.uniform(-80, 80), rng.uniform(-170, 170))
        entities.append(Entity(ids[i], label, preds))
    kg = build_graph(entities)

    vectors: Dict[str, np.ndarray] = {}
    for i in range(n):
        if rng.random() >= vector_coverage:
            continue
        if vectors and rng.random() < 0.2:
            keys = sorted(vectors)
            vectors[ids[i]] = vectors[keys[int(rng.integers(0, len(keys)))]].copy()
        else:
            vectors[ids[i]] = rng.normal(size=dim)
    return kg, EmbeddingStore(vectors, dim)


# --------------------------------------------------------------------------
# gazetteer benchmark

_ONSETS = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "gl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "", "", "n", "r", "s", "l"]

_POI_KINDS = [("Museum", "dbo:Museum"), ("Castle", "dbo:Castle"), ("Park", "dbo:Park"),
              ("Stadium", "dbo:Stadium"), ("Bridge", "dbo:Bridge")]
_DISTRACTOR_KINDS = [("a household object", "dbo:Device"), ("a folk dance", "dbo:Activity"),
                     ("a card game", "dbo:Activity"), ("a novel", "dbo:Work")]

ONE_LOC_TEMPLATES = [
    "Just arrived in {0}, the weather is lovely",
    "Heavy traffic near {0} this morning",
    "Greetings from {0}!",
    "Can anyone recommend a good cafe in {0}?",
    "Flooding reported around {0} tonight",
    "Spent the whole weekend at {0}",
    "Beautiful sunset over {0} today #travel",
    "Power outage in {0} since noon",
]
TWO_LOC_TEMPLATES = [
    "Driving from {0} to {1} right now",
    "Train delays between {0} and {1} again",
    "Moved from {0} to {1} last year",
    "{0} and {1} both hit by the storm",
]
ZERO_LOC_TEMPLATES = [
    "What a long day at work",
    "Coffee first, questions later",
    "Anyone watching the game tonight?",
    "Cannot believe it is already Friday",
]
PERSON_TEMPLATES = [
    "Listening to {0} all afternoon",
    "New interview with {0} is out",
    "{0} was brilliant last night",
]

_TEMPLATE_WORDS = {w.strip("{}!?#,.").lower() for t in ONE_LOC_TEMPLATES + TWO_LOC_TEMPLATES + ZERO_LOC_TEMPLATES
                   + PERSON_TEMPLATES for w in t.split()}


class _Names:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used = set(_TEMPLATE_WORDS)

    def __call__(self) -> str:
        while True:
            k = int(self.rng.integers(2, 4))
            name = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(k))
            name = (name + self.rng.choice(_CODAS)).capitalize()
            if name.lower() not in self.used:
                self.used.add(name.lower())
                return name


@dataclass
class SyntheticCorpus:
    kg: KnowledgeGraph
    documents: List[Document]
    alias_rows: List[Tuple[str, str, int]]
    homonym_cities: List[str] = field(default_factory=list)

    def lexicon(self) -> Lexicon:
        return build_lexicon(self.kg, alias_rows=self.alias_rows)


def generate_gazetteer(seed: int = 0, n_countries: int = 10, regions_per_country: int = 3,
                       n_cities: int = 170, n_pois: int = 80, n_persons: int = 60, n_homonyms: int = 50,
                       n_works: int = 100):
    """Entity list of the benchmark graph (500 entities with the defaults)."""
    rng = np.random.default_rng(seed)
    name = _Names(rng)
    ents: List[Entity] = []
    cats: Dict[str, List[str]] = {k: [] for k in ("country", "region", "city", "poi", "person", "homonym", "work")}
    aliases: List[Tuple[str, str, int]] = []

    def add(kind: str, label: str, classes, preds, short: str):
        iri = f"{EX}{kind}{len(cats[kind]):03d}_{label.replace(' ', '_')}"
        ents.append(Entity(iri, label, preds, frozenset(classes), short, short + " " + short,
                           int(rng.integers(2000, 200000))))
        cats[kind].append(iri)
        return iri

    coords: Dict[str, Tuple[float, float]] = {}
    labels: Dict[str, str] = {}
    # countries on a coarse grid so they are thousands of km apart
    cells = rng.permutation(36)[:n_countries]
    for c in cells:
        lat = -50 + 20 * (c // 6) + rng.uniform(-3, 3)
        lon = -150 + 55 * (c % 6) + rng.uniform(-5, 5)
        lbl = name()
        iri = add("country", lbl, ["dbo:Country"], {"georss:point": _point(lat, lon)}, f"{lbl} is a country.")
        coords[iri], labels[iri] = (lat, lon), lbl
    for country in list(cats["country"]):
        clat, clon = coords[country]
        for _ in range(regions_per_country):
            lat, lon = clat + rng.uniform(-6, 6), clon + rng.uniform(-8, 8)
            lbl = name()
            iri = add("region", lbl, ["dbo:AdministrativeRegion"],
                      {"georss:point": _point(lat, lon), "dbo:country": ["@" + country]},
                      f"{lbl} is a region of {labels[country]}.")
            coords[iri], labels[iri] = (lat, lon), lbl
    regions = list(cats["region"])
    region_country = {r: cats["country"][i // regions_per_country] for i, r in enumerate(regions)}
    for i in range(n_cities):
        region = regions[i % len(regions)]
        rlat, rlon = coords[region]
        lat, lon = rlat + rng.uniform(-2.5, 2.5), rlon + rng.uniform(-2.5, 2.5)
        lbl = name()
        iri = add("city", lbl, ["dbo:City", "dbo:Settlement"],
                  {"georss:point": _point(lat, lon), "dbo:isPartOf": ["@" + region],
                   "dbo:country": ["@" + region_country[region]]},
                  f"{lbl} is a city in {labels[region]}, {labels[region_country[region]]}.")
        coords[iri], labels[iri] = (lat, lon), lbl
        aliases.append((lbl, iri, 10))
    cities = list(cats["city"])
    for i in range(n_pois):
        city = cities[int(rng.integers(0, len(cities)))]
        kind, cls = _POI_KINDS[i % len(_POI_KINDS)]
        lat, lon = coords[city][0] + rng.uniform(-0.05, 0.05), coords[city][1] + rng.uniform(-0.05, 0.05)
        lbl = f"{name()} {kind}"
        iri = add("poi", lbl, [cls], {"georss:point": _point(lat, lon), "dbo:location": ["@" + city]},
                  f"The {lbl} is a {kind.lower()} in {labels[city]}.")
        coords[iri], labels[iri] = (lat, lon), lbl
    for _ in range(n_persons):
        city = cities[int(rng.integers(0, len(cities)))]
        lbl = f"{name()} {name()}"
        add("person", lbl, ["dbo:Person", "dbo:Artist"], {"dbo:birthPlace": ["@" + city]},
            f"{lbl} is a musician born in {labels[city]}.")
    # homonyms: a non-geographic entity shares a city's name, is the more common
    # sense, and reaches the city through one intermediate entity
    shadowed = [cities[i] for i in rng.permutation(len(cities))[:n_homonyms]]
    for city in shadowed:
        desc, cls = _DISTRACTOR_KINDS[int(rng.integers(0, len(_DISTRACTOR_KINDS)))]
        mid_label = f"{name()} tradition"
        mid = add("work", mid_label, ["dbo:Work"], {"dbo:wikiPageWikiLink": ["@" + city]},
                  f"The {mid_label} originated in {labels[city]}.")
        lbl = labels[city].lower()
        iri = add("homonym", lbl, [cls], {"dbo:wikiPageWikiLink": ["@" + mid]}, f"A {lbl} is {desc}.")
        aliases.append((lbl, iri, 90))
    for _ in range(max(0, n_works - n_homonyms)):
        city = cities[int(rng.integers(0, len(cities)))]
        lbl = f"The {name()} Chronicle"
        add("work", lbl, ["dbo:Work"], {"dbo:wikiPageWikiLink": ["@" + city]}, f"{lbl} is a newspaper.")
    return ents, cats, aliases, shadowed


def generate_corpus(seed: int = 0, n_documents: int = 300, homonym_rate: float = 0.15,
                    location_mix: Sequence[float] = (0.3, 0.5, 0.2), **gazetteer_kw) -> SyntheticCorpus:
    """Gazetteer graph plus template documents with known locations.

    ``location_mix`` gives the share of documents with 0, 1 and 2 locations;
    ``homonym_rate`` the share of location mentions naming a shadowed city.
    """
    ents, cats, aliases, shadowed = generate_gazetteer(seed, **gazetteer_kw)
    kg = build_graph(ents)
    rng = np.random.default_rng(seed + 1)
    plain_cities = [c for c in cats["city"] if c not in set(shadowed)]
    pools = [(plain_cities, 0.65), (cats["poi"], 0.20), (cats["region"], 0.08), (cats["country"], 0.07)]

    def pick_location() -> str:
        if shadowed and rng.random() < homonym_rate:
            return shadowed[int(rng.integers(0, len(shadowed)))]
        r = rng.random() * sum(w for _, w in pools)
        for pool, w in pools:
            if r < w and pool:
                return pool[int(rng.integers(0, len(pool)))]
            r -= w
        return plain_cities[0]

    docs: List[Document] = []
    counts = rng.choice(3, size=n_documents, p=np.asarray(location_mix) / np.sum(location_mix))
    for i, k in enumerate(counts):
        doc_id = f"doc{i:04d}"
        if k == 0:
            if cats["person"] and rng.random() < 0.5:
                t = PERSON_TEMPLATES[int(rng.integers(0, len(PERSON_TEMPLATES)))]
                person = cats["person"][int(rng.integers(0, len(cats["person"])))]
                text = t.format(kg.entities[person].label)
            else:
                text = ZERO_LOC_TEMPLATES[int(rng.integers(0, len(ZERO_LOC_TEMPLATES)))]
            docs.append(Document(doc_id, text, []))
            continue
        locs = [pick_location()]
        while len(locs) < k:
            other = pick_location()
            if other not in locs:
                locs.append(other)
        templates = ONE_LOC_TEMPLATES if k == 1 else TWO_LOC_TEMPLATES
        text = templates[int(rng.integers(0, len(templates)))].format(*(kg.entities[l].label for l in locs))
        docs.append(Document(doc_id, text, [GroundTruth(kg.geo_index[l], l) for l in locs]))
    return SyntheticCorpus(kg, docs, aliases, shadowed)
