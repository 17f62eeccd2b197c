import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kggeo.annotator import Annotation, Document, GroundTruth
from kggeo.embeddings import EmbeddingStore, MissingVectorError
from kggeo.expansion import (CacheError, ExpansionConfig, ExpansionTable, Strategy, Tiebreak, candidate_pool,
                             expand, expand_latent, expand_spelling, expand_topological, jaccard_distance,
                             max_theoretical_recall, precompute_expansions)
from kggeo.kg import Entity, UnknownEntityError, build_graph
from kggeo.synthetic import random_graph
from oracles import as_tuples, brute_latent, brute_spelling, brute_topological
from conftest import TOY

STRATEGIES = list(Strategy)


def names(cands):
    inv = {v: k for k, v in TOY.items()}
    return [inv[c.entity] for c in cands]


# ---------------------------------------------------------------- toy graph

def test_toy_spelling(toy_kg):
    assert names(expand_spelling(TOY["bath"], 2, toy_kg)) == ["Bath", "Bata"]
    assert expand_spelling(TOY["bath"], 0, toy_kg) == []


def test_toy_topological(toy_kg, toy_emb):
    spe = expand_topological(TOY["bath"], 2, Tiebreak.SPELLING, toy_kg, toy_emb)
    lat = expand_topological(TOY["bath"], 2, Tiebreak.LATENT, toy_kg, toy_emb)
    assert names(spe) == ["Bath", "Saturnia"]
    assert names(lat) == ["Saturnia", "Bath"]
    assert [c.hop for c in spe] == [2, 2]


def test_toy_topological_ranks(toy_kg):
    cands = expand_topological(TOY["bath"], 14, Tiebreak.SPELLING, toy_kg)
    got = [(n, c.hop, c.expansion_rank, c.expansion_rank_onlygeo) for n, c in zip(names(cands), cands)]
    assert got[:4] == [("Bath", 2, 2, 0), ("Saturnia", 2, 3, 1), ("Italy", 3, 4, 2), ("UK", 3, 5, 3)]


def test_toy_latent(toy_kg, toy_emb):
    assert names(expand_latent(TOY["bath"], 2, toy_kg, toy_emb)) == ["Hot Springs", "Saturnia"]
    first = expand_latent(TOY["Saturnia"], 3, toy_kg, toy_emb)[0]
    assert first.entity == TOY["Saturnia"] and first.hop == 0 and first.expansion_rank == 0


def test_latent_error_kinds(toy_kg, toy_emb):
    partial = EmbeddingStore({k: v for k, v in toy_emb.items() if k != TOY["Bach"]})
    with pytest.raises(MissingVectorError):
        expand_latent(TOY["Bach"], 2, toy_kg, partial)
    with pytest.raises(UnknownEntityError):
        expand_latent("http://example.org/none", 2, toy_kg, toy_emb)
    with pytest.raises(UnknownEntityError):
        expand_spelling("http://example.org/none", 2, toy_kg)
    with pytest.raises(UnknownEntityError):
        expand_topological("http://example.org/none", 2, Tiebreak.SPELLING, toy_kg)


def test_disconnected_start_without_geo_neighbours():
    kg = build_graph([Entity("x:a", "a"), Entity("x:b", "b", {"georss:point": ["1 1"]})])
    assert expand_topological("x:a", 5, Tiebreak.SPELLING, kg) == []
    # spelling ignores topology and flags the unreachable hop
    (c,) = expand_spelling("x:a", 5, kg, max_hops=3)
    assert c.hop == 4


def test_config_validation():
    with pytest.raises(ValueError):
        ExpansionConfig(size_L=-1)
    with pytest.raises(ValueError):
        ExpansionConfig(max_hops=0)


# ---------------------------------------------------------------- oracle equivalence

def oracle(kg, emb, start, L, strategy, max_hops=6):
    if strategy is Strategy.SPELLING:
        return brute_spelling(kg, start, L, max_hops)
    if strategy is Strategy.LATENT:
        return brute_latent(kg, emb, start, L, max_hops)
    tb = "spelling" if strategy is Strategy.TOPOLOGICAL_SPE else "latent"
    return brute_topological(kg, start, L, tb, emb, max_hops)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(STRATEGIES), st.sampled_from([0, 1, 2, 5, 10, 20]),
       st.integers(1, 6))
def test_strategies_match_brute_force(seed, strategy, L, max_hops):
    kg, emb = random_graph(seed)
    rng = np.random.default_rng(seed)
    ids = kg.sorted_ids()
    for start in rng.choice(ids, size=min(5, len(ids)), replace=False):
        start = str(start)
        if strategy is Strategy.LATENT and start not in emb:
            with pytest.raises(MissingVectorError):
                expand_latent(start, L, kg, emb)
            continue
        got = expand(start, ExpansionConfig(strategy, L, max_hops), kg, emb)
        assert as_tuples(got) == oracle(kg, emb, start, L, strategy, max_hops)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(STRATEGIES), st.integers(0, 15), st.integers(0, 15))
def test_output_invariants_and_prefix_property(seed, strategy, l1, l2):
    l1, l2 = min(l1, l2), max(l1, l2)
    kg, emb = random_graph(seed, n_nodes=40)
    for start in kg.sorted_ids()[:5]:
        if strategy is Strategy.LATENT and start not in emb:
            continue
        a = expand(start, ExpansionConfig(strategy, l1), kg, emb)
        b = expand(start, ExpansionConfig(strategy, l2), kg, emb)
        assert b[:len(a)] == a
        assert len(b) <= l2
        assert len({c.entity for c in b}) == len(b)
        for c in b:
            assert kg.geo_index[c.entity] == c.coordinate
            assert c.expansion_rank_onlygeo <= c.expansion_rank
        assert b == expand(start, ExpansionConfig(strategy, l2), kg, emb)


def test_large_spelling_expansion_matches_full_sort():
    kg, _ = random_graph(7, n_nodes=200)
    for start in kg.sorted_ids()[::40]:
        assert as_tuples(expand_spelling(start, 10, kg)) == brute_spelling(kg, start, 10)


def test_latent_on_random_unit_vectors():
    rng = np.random.default_rng(3)
    ents = [Entity(f"x:{i:02d}", f"n{i}", {"georss:point": [f"{i % 80} {i}"]} if i % 3 else {}) for i in range(50)]
    kg = build_graph(ents)
    vecs = rng.normal(size=(50, 8))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    emb = EmbeddingStore({f"x:{i:02d}": vecs[i] for i in range(50)})
    for start in ("x:00", "x:07", "x:31"):
        assert as_tuples(expand_latent(start, 5, kg, emb)) == brute_latent(kg, emb, start, 5)


# ---------------------------------------------------------------- tables

def test_table_matches_online_calls(toy_kg, toy_emb):
    for strategy in STRATEGIES:
        cfg = ExpansionConfig(strategy, 6)
        table = precompute_expansions(toy_kg, cfg, toy_emb)
        assert len(table) == len(toy_kg)
        for iri in toy_kg.sorted_ids():
            if strategy is Strategy.LATENT and iri not in toy_emb:
                assert table.lookup(iri) == ()
            else:
                assert list(table.lookup(iri)) == expand(iri, cfg, toy_kg, toy_emb)


def test_table_on_random_entities_and_threads():
    kg, emb = random_graph(11, n_nodes=120)
    for strategy in STRATEGIES:
        cfg = ExpansionConfig(strategy, 8)
        one = precompute_expansions(kg, cfg, emb, threads=1)
        four = precompute_expansions(kg, cfg, emb, threads=4)
        assert one.entries == four.entries
        for iri in kg.sorted_ids()[:20]:
            if iri in emb or strategy is not Strategy.LATENT:
                assert list(one.lookup(iri)) == expand(iri, cfg, kg, emb)


def test_empty_graph_table():
    kg = build_graph([])
    assert len(precompute_expansions(kg, ExpansionConfig())) == 0


def test_cache_round_trip(tmp_path, toy_kg, toy_emb):
    p = tmp_path / "t.cache"
    table = precompute_expansions(toy_kg, ExpansionConfig(Strategy.TOPOLOGICAL_LAT, 5), toy_emb, cache_path=p)
    again = ExpansionTable.load(p, toy_kg)
    assert again == table
    with pytest.raises(ValueError):
        again.lookup(TOY["bath"], 6)


def test_cache_rejects_partial_and_foreign(tmp_path, toy_kg):
    p = tmp_path / "t.cache"
    precompute_expansions(toy_kg, ExpansionConfig(), cache_path=p)
    lines = p.read_text().splitlines(keepends=True)
    (tmp_path / "partial").write_text("".join(lines[:-2]))
    with pytest.raises(CacheError, match="partial"):
        ExpansionTable.load(tmp_path / "partial")
    (tmp_path / "garbled").write_text("".join(lines).replace("Bath", "Bahh"))
    with pytest.raises(CacheError):
        ExpansionTable.load(tmp_path / "garbled")
    (tmp_path / "empty").write_text("")
    with pytest.raises(CacheError):
        ExpansionTable.load(tmp_path / "empty")
    other, _ = random_graph(1)
    with pytest.raises(CacheError, match="different"):
        ExpansionTable.load(p, other)


def test_cache_write_failure(tmp_path, toy_kg):
    with pytest.raises(CacheError):
        precompute_expansions(toy_kg, ExpansionConfig(), cache_path=tmp_path / "missing" / "x")


# ---------------------------------------------------------------- recall and jaccard

def toy_dataset(toy_kg):
    text = "Spent the afternoon in a hot bath, thinking of Roman thermae"
    s = text.index("bath")
    truth = GroundTruth(toy_kg.geo_index[TOY["Bath"]], TOY["Bath"])
    doc = Document("d0", text, [truth])
    return [doc], {"d0": [Annotation("d0", "bath", s, s + 4, TOY["bath"], 0.9)]}


def test_recall_gain_needs_expansion(toy_kg):
    docs, anns = toy_dataset(toy_kg)
    table = precompute_expansions(toy_kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 50))
    assert max_theoretical_recall(table, docs, anns, 0, 50, toy_kg) == 0.0
    assert max_theoretical_recall(table, docs, anns, 2, 50, toy_kg) == 1.0


def test_recall_without_expansion_counts_geographic_starts(toy_kg):
    # ten one-location documents; the start entity is geographic and close in four of them
    geo = lambda k: toy_kg.geo_index[TOY[k]]
    cases = [("Bath", "Bath"), ("Saturnia", "Saturnia"), ("Italy", "Italy"), ("UK", "UK"),
             ("Bath", "Saturnia"), ("Italy", "UK"), ("bath", "Bath"), ("thermae", "Saturnia"),
             ("Bach", "Bath"), ("Colorado", "Bata")]
    docs, anns = [], {}
    for i, (start, truth) in enumerate(cases):
        docs.append(Document(f"d{i}", "xx", [GroundTruth(geo(truth))]))
        anns[f"d{i}"] = [Annotation(f"d{i}", "xx", 0, 2, TOY[start], 1.0)]
    table = precompute_expansions(toy_kg, ExpansionConfig(Strategy.SPELLING, 50))
    assert max_theoretical_recall(table, docs, anns, 0, 50, toy_kg) == pytest.approx(4 / 10)
    assert max_theoretical_recall(table, docs, anns, 50, 50, toy_kg) == 1.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(STRATEGIES))
def test_recall_is_monotone_in_L(seed, strategy):
    kg, emb = random_graph(seed, n_nodes=60, geo_fraction=0.3)
    rng = np.random.default_rng(seed)
    geo = sorted(kg.geo_index)
    if not geo:
        return
    docs, anns = [], {}
    for i in range(8):
        truth = kg.geo_index[geo[rng.integers(len(geo))]]
        start = kg.sorted_ids()[rng.integers(len(kg))]
        docs.append(Document(f"d{i}", "xx", [GroundTruth(truth)]))
        anns[f"d{i}"] = [Annotation(f"d{i}", "xx", 0, 2, start, 1.0)]
    table = precompute_expansions(kg, ExpansionConfig(strategy, 50), emb)
    curve = [max_theoretical_recall(table, docs, anns, L, 500, kg) for L in range(51)]
    assert all(a <= b for a, b in zip(curve, curve[1:]))


def test_candidate_pool_without_expansion(toy_kg):
    table = precompute_expansions(toy_kg, ExpansionConfig(size_L=3))
    assert [c.entity for c in candidate_pool(toy_kg, table, TOY["Bath"], 0)] == [TOY["Bath"]]
    assert candidate_pool(toy_kg, table, TOY["bath"], 0) == []
    assert len(candidate_pool(toy_kg, table, TOY["bath"], 3)) == 3


def test_jaccard_examples():
    assert jaccard_distance({"x"}, {"x"}) == 0.0
    assert jaccard_distance({"x"}, {"y"}) == 1.0
    assert jaccard_distance({"x", "y"}, {"y", "z"}) == pytest.approx(2 / 3)
    assert jaccard_distance(set(), set()) == 0.0


@given(st.sets(st.integers(0, 9)), st.sets(st.integers(0, 9)))
def test_jaccard_properties(a, b):
    assert jaccard_distance(a, b) == jaccard_distance(b, a)
    assert jaccard_distance(a, a) == 0.0
    assert 0.0 <= jaccard_distance(a, b) <= 1.0


def test_precompute_is_fast_on_small_graphs():
    kg, emb = random_graph(5, n_nodes=200)
    t0 = time.perf_counter()
    for s in STRATEGIES:
        precompute_expansions(kg, ExpansionConfig(s, 20), emb)
    assert time.perf_counter() - t0 < 30
