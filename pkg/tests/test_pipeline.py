import json

import pytest

from kggeo.annotator import Annotation, Document, GroundTruth, annotate, build_lexicon
from kggeo.evaluation import GeoPrediction, evaluate
from kggeo.expansion import ExpansionConfig, Strategy, precompute_expansions, max_theoretical_recall
from kggeo.features import HashedContextEncoder
from kggeo.kg import Entity, GeoCoordinate, Granularity, SnapshotFormatError, build_graph
from kggeo.pipeline import (FeatureInputs, annotation_candidates, exact_label_baseline, geoparse, geoparse_all,
                            load_dataset, load_predictions, mean_jaccard, strategy_report, vertical_coordinate,
                            write_dataset, write_predictions)
from conftest import TOY, data_file

TOY_TEXT = "Relaxing in Bath, visiting its Roman heritage"
INPUTS = FeatureInputs(anchor_vectors=HashedContextEncoder())


@pytest.fixture(scope="module")
def toy_setup(toy_kg):
    lex = build_lexicon(toy_kg, data_file("toy_bath_aliases.tsv"))
    table = precompute_expansions(toy_kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 5))
    return lex, table


def test_toy_document_resolves_to_bath(toy_kg, toy_setup, synthetic_selector):
    lex, table = toy_setup
    doc = Document("toy", TOY_TEXT)
    (ann,) = annotate(doc, lex)
    assert ann.start_entity == TOY["bath"]
    preds = geoparse(doc, toy_kg, lex, table, synthetic_selector, INPUTS)
    assert [p.entity for p in preds] == [TOY["Bath"]]
    assert preds[0].coordinate == toy_kg.geo_index[TOY["Bath"]]
    assert preds[0].score >= synthetic_selector.c_th
    assert preds[0].granularity is Granularity.CITY
    assert preds == geoparse(doc, toy_kg, lex, table, synthetic_selector, INPUTS)


def test_duplicate_anchors_are_deduplicated(toy_kg, toy_setup, synthetic_selector):
    lex, table = toy_setup
    doc = Document("dup", "Bath then #Bath again, visiting its Roman heritage")
    assert len(annotate(doc, lex)) == 2
    preds = geoparse(doc, toy_kg, lex, table, synthetic_selector, INPUTS)
    assert len(preds) == 1 and preds[0].entity == TOY["Bath"]


def test_no_annotations_no_predictions(toy_kg, toy_setup, synthetic_selector):
    lex, table = toy_setup
    assert geoparse(Document("e", "nothing here"), toy_kg, lex, table, synthetic_selector) == []
    assert geoparse(Document("e", ""), toy_kg, {}, table, synthetic_selector) == []


def test_threshold_suppresses_everything(toy_kg, toy_setup, synthetic_selector):
    lex, table = toy_setup
    strict = synthetic_selector.with_threshold(1e9)
    assert geoparse(Document("toy", TOY_TEXT), toy_kg, lex, table, strict, INPUTS) == []


def test_synthetic_test_split_quality(corpus, synthetic_selector):
    from kggeo.evaluation import stratified_split
    split = stratified_split(corpus.documents, seed=0)
    by_id = {d.id: d for d in corpus.documents}
    test = [by_id[i] for i in split.test]
    table = precompute_expansions(corpus.kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 5))
    preds, seconds = geoparse_all(test, corpus.kg, corpus.lexicon(), table, synthetic_selector, INPUTS)
    report = evaluate(preds, {d.id: d.ground_truth for d in test}, 50, elapsed_seconds=seconds)
    assert report.f1 >= 0.9
    assert report.elapsed_per_doc >= 0


def test_vertical_expansion_uses_same_as():
    ents = [Entity("x:start", "Avalon", same_as=("y:avalon",)),
            Entity("y:avalon", "Avalon", {"georss:point": ["51.1 -2.7"]})]
    kg = build_graph(ents)
    table = precompute_expansions(kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 0))
    ann = Annotation("d", "Avalon", 0, 6, "x:start", 1.0)
    assert annotation_candidates(kg, table, ann, 0) == []
    (c,) = annotation_candidates(kg, table, ann, 0, vertical=True)
    assert c.entity == "x:start" and c.coordinate == GeoCoordinate(51.1, -2.7) and c.hop == 0
    assert vertical_coordinate(kg, "x:start") == GeoCoordinate(51.1, -2.7)
    assert vertical_coordinate(kg, "y:avalon") == GeoCoordinate(51.1, -2.7)


def test_exact_label_baseline(toy_kg):
    preds = exact_label_baseline(Document("b", "From Bath to Italy and back to Bath"), toy_kg)
    assert [p.entity for p in preds] == [TOY["Bath"], TOY["Italy"]]
    # case-sensitive: the lowercase form is the bathtub, which has no coordinate
    assert exact_label_baseline(Document("b", "a hot bath"), toy_kg) == []


def test_dataset_round_trip(tmp_path):
    docs = [Document("a", "x", [GroundTruth(GeoCoordinate(1, 2), "x:e")]), Document("b", "ΣΑΣ", [])]
    write_dataset(docs, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.jsonl") == docs


@pytest.mark.parametrize("line", ['{"id": "a"}', '{"id": "a", "text": 3}', 'not json',
                                  '{"id": "a", "text": "t", "locations": [{"lat": 99, "lon": 0}]}'])
def test_bad_dataset_lines(tmp_path, line):
    p = tmp_path / "d.jsonl"
    p.write_text('{"id": "ok", "text": "fine"}\n' + line + "\n")
    with pytest.raises(SnapshotFormatError) as err:
        load_dataset(p)
    assert err.value.lineno == 2


def test_duplicate_document_ids(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps({"id": "a", "text": "t"}) + "\n" + json.dumps({"id": "a", "text": "u"}) + "\n")
    with pytest.raises(SnapshotFormatError, match="duplicate"):
        load_dataset(p)


def test_predictions_round_trip(tmp_path):
    preds = [GeoPrediction("d", (0, 4), "x:e", GeoCoordinate(1, 2), 3.5, Granularity.CITY),
             GeoPrediction("d", (5, 9), "x:f", GeoCoordinate(3, 4), 1.5, Granularity.POI)]
    write_predictions(preds, tmp_path / "p.jsonl")
    assert load_predictions(tmp_path / "p.jsonl") == {"d": preds}


# ---------------------------------------------------------------- strategy report

def test_report_baseline_only(corpus):
    docs = corpus.documents[:30]
    rep = strategy_report(corpus.kg, docs, corpus.lexicon(), list(Strategy), [0])
    assert rep.columns == ["L", "baseline"] and len(rep.rows) == 1


def test_report_matches_direct_calls(corpus):
    docs = corpus.documents[:60]
    lex = corpus.lexicon()
    strategies = [Strategy.SPELLING, Strategy.TOPOLOGICAL_SPE]
    rep = strategy_report(corpus.kg, docs, lex, strategies, [0, 1, 3, 5])
    anns = {d.id: annotate(d, lex) for d in docs}
    flat = [a for d in docs for a in anns[d.id]]
    tables = {s: precompute_expansions(corpus.kg, ExpansionConfig(s, 5)) for s in strategies}
    for row in rep.rows:
        for s in strategies:
            assert row[f"recall:{s.value}"] == max_theoretical_recall(tables[s], docs, anns, row["L"], 50,
                                                                      corpus.kg)
        pair = f"jaccard:{strategies[0].value}|{strategies[1].value}"
        assert row[pair] == mean_jaccard(corpus.kg, tables[strategies[0]], tables[strategies[1]], flat, row["L"])
    for s in strategies:
        assert mean_jaccard(corpus.kg, tables[s], tables[s], flat, 5) == 0.0
    header = rep.to_csv().splitlines()[0]
    assert header == ",".join(rep.columns)
