import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kggeo.annotator import Annotation, Document
from kggeo.embeddings import EmbeddingStore
from kggeo.expansion import Candidate, expand_topological, Tiebreak
from kggeo.features import (CATEGORICAL, FEATURE_GROUPS, FEATURE_NAMES, FeatureVector, HashedContextEncoder,
                            PrecomputedContextVectors, TagRecord, compute_features, encode_matrix,
                            encoded_columns, fallback_tagger, load_anchor_vectors, load_tags, write_feature_csv,
                            write_tags)
from kggeo.kg import Entity, GeoCoordinate, SnapshotFormatError, build_graph
from conftest import TOY

EX = "http://example.org/"


def test_table_layout():
    assert len(FEATURE_NAMES) == 31
    assert [len(v) for v in FEATURE_GROUPS.values()] == [4, 10, 9, 4, 2, 2]
    assert FEATURE_NAMES[6] == "edit_from_original_label"
    assert FEATURE_NAMES[11] == "edit_ratio_from_anchor"
    assert FEATURE_NAMES[19] == "anchor_in_short_abstract"
    assert {k: len(v) for k, v in CATEGORICAL.items()} == {"superclass": 5, "pos_tag": 50, "chunk_tag": 10,
                                                           "ner_tag": 5}
    assert len(encoded_columns()) == 31 - 4 + 5 + 50 + 10 + 5


def test_toy_bath_candidate_hand_computed(toy_kg):
    text = "Relaxing in Bath, visiting its Roman heritage"
    ann = Annotation("d", "Bath", 12, 16, TOY["bath"], 0.9)
    (cand,) = expand_topological(TOY["bath"], 1, Tiebreak.SPELLING, toy_kg)
    fv = compute_features(ann, cand, toy_kg, document_text=text)
    want = {
        "confidence": 0.9, "hop": 2, "expansion_rank": 2, "expansion_rank_onlygeo": 0,
        "num_tokens_candidate_label": 1, "len_candidate_label": 4, "edit_from_original_label": 1,
        "num_tokens_anchor": 1, "len_anchor": 4, "uppercase_in_anchor": 1, "edit_from_anchor": 0,
        "edit_ratio_from_anchor": 0, "num_tokens_ratio": 1, "len_ratio": 1,
        # City -> Settlement -> PopulatedPlace -> Place
        "superclass": 0, "num_of_superclasses": 3, "num_of_classes": 2,
        "page_degree": 2, "page_length": 64012,
        # "Bath ... baths" in the short abstract, "Bath ... Bath" in the long one
        "anchor_in_short_abstract": 1, "anchor_in_short_abstract_ci": 2,
        "anchor_in_long_abstract": 2, "anchor_in_long_abstract_ci": 2,
        "pos_tag": 13, "chunk_tag": 0, "pos_confidence": 0.5, "chunk_confidence": 0.5,
        "ner_tag": 1, "ner_confidence": 0.6, "rdf2vec_similarity": 0.0, "bert_similarity": 0.0,
    }
    assert fv.as_dict() == pytest.approx(want)


def small_kg():
    city = Entity(EX + "bath", "Bath, Somerset", {"georss:point": ["51.38 -2.36"]}, classes=("dbo:City",),
                  short_abstract="Bath is a city in Somerset.")
    start = Entity(EX + "s", "Bath")
    return build_graph([city, start])


def test_multi_token_candidate_label():
    kg = small_kg()
    cand = Candidate(EX + "bath", GeoCoordinate(51.38, -2.36), 1, 1, 0)
    fv = compute_features(Annotation("d", "Bath", 0, 4, EX + "s", 1.0), cand, kg)
    assert fv["num_tokens_candidate_label"] == 2
    assert fv["edit_from_anchor"] == 10
    assert fv["edit_ratio_from_anchor"] == pytest.approx(10 / 4)
    assert fv["len_ratio"] == pytest.approx(14 / 4)
    lower = compute_features(Annotation("d", "bath", 0, 4, EX + "s", 1.0), cand, kg)
    assert lower["anchor_in_short_abstract"] == 0
    assert lower["anchor_in_short_abstract_ci"] == 1
    assert lower["page_length"] == -1


def test_similarities_from_stores():
    kg = small_kg()
    cand = Candidate(EX + "bath", GeoCoordinate(51.38, -2.36), 1, 1, 0)
    ann = Annotation("d", "Bath", 0, 4, EX + "s", 1.0)
    emb = EmbeddingStore({EX + "s": [1, 0], EX + "bath": [1, 1]})
    ctx = PrecomputedContextVectors({("d", (0, 4)): np.array([0.0, 2.0])}, EmbeddingStore({EX + "bath": [0, 1]}))
    fv = compute_features(ann, cand, kg, embeddings=emb, anchor_vectors=ctx)
    assert fv["rdf2vec_similarity"] == pytest.approx(1 / math.sqrt(2))
    assert fv["bert_similarity"] == pytest.approx(1.0)
    # the label "Bath, Somerset" never occurs in the abstract, so there is no mention vector
    fv = compute_features(ann, cand, kg, anchor_vectors=HashedContextEncoder(), document_text="Bath today")
    assert fv["bert_similarity"] == 0.0


def test_hashed_context_similarity(toy_kg):
    (cand,) = expand_topological(TOY["bath"], 1, Tiebreak.SPELLING, toy_kg)
    ann = Annotation("d", "Bath", 0, 4, TOY["bath"], 1.0)
    fv = compute_features(ann, cand, toy_kg, anchor_vectors=HashedContextEncoder(), document_text="Bath is a city")
    assert 0.0 < fv["bert_similarity"] <= 1.0


def test_fallback_tags():
    doc = Document("d", "Bath and bath")
    anns = [Annotation("d", "Bath", 0, 4, "x", 1.0), Annotation("d", "bath", 9, 13, "x", 1.0)]
    tags = fallback_tagger(doc, anns)
    a, b = tags[("d", (0, 4))], tags[("d", (9, 13))]
    assert (a.pos_tag, a.ner_tag, b.pos_tag, b.ner_tag) == ("NNP", "LOC", "NN", "O")
    for t in (a, b):
        assert {t.pos_confidence, t.chunk_confidence, t.ner_confidence} <= {0.5, 0.6}


def test_tag_file_round_trip(tmp_path):
    recs = [TagRecord("d", (0, 4), "NNP", 0.9, "NP", 0.8, "LOC", 0.99)]
    p = tmp_path / "t.jsonl"
    write_tags(recs, p)
    assert load_tags(p) == {("d", (0, 4)): recs[0]}


def test_tag_file_bio_prefix_and_errors(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"doc_id": "d", "start": 0, "end": 4, "pos": "NNP", "pos_conf": 1, "chunk": "B-NP", '
                 '"chunk_conf": 1, "ner": "S-LOC", "ner_conf": 1}\n'
                 '{"doc_id": "d", "start": 5, "end": 6, "pos": "BAD", "pos_conf": 1, "chunk": "NP", '
                 '"chunk_conf": 1, "ner": "O", "ner_conf": 1}\n')
    with pytest.raises(SnapshotFormatError) as err:
        load_tags(p)
    assert err.value.lineno == 2
    p.write_text(p.read_text().splitlines()[0] + "\n")
    rec = load_tags(p)[("d", (0, 4))]
    assert (rec.chunk_tag, rec.ner_tag) == ("NP", "LOC")


def test_anchor_vector_file(tmp_path):
    p = tmp_path / "a.tsv"
    p.write_text("d\t0\t4\t1 2 3\n")
    got = load_anchor_vectors(p)
    np.testing.assert_array_equal(got[("d", (0, 4))], [1, 2, 3])
    p.write_text("d\t0\t4\t1 2 3\nd\t5\t6\t1 2\n")
    with pytest.raises(SnapshotFormatError) as err:
        load_anchor_vectors(p)
    assert err.value.lineno == 2


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector((0.0,) * 30)
    with pytest.raises(ValueError):
        FeatureVector((math.inf,) + (0.0,) * 30)
    fv = FeatureVector(tuple(float(i % 5) for i in range(31)))
    assert FeatureVector.from_dict(fv.as_dict()) == fv


def test_encode_matrix_one_hot():
    values = [0.0] * 31
    values[FEATURE_NAMES.index("pos_tag")] = 13
    m = encode_matrix([FeatureVector(tuple(values))])
    cols = [c for _, c in encoded_columns()]
    assert m.shape == (1, 97)
    assert m[0, cols.index("pos_tag=NNP")] == 1.0
    assert m[0, cols.index("superclass=Place")] == 1.0
    assert m.sum() == 4.0
    values[FEATURE_NAMES.index("ner_tag")] = 7
    with pytest.raises(ValueError):
        encode_matrix([FeatureVector(tuple(values))])


def test_feature_csv(tmp_path):
    p = tmp_path / "f.csv"
    write_feature_csv([FeatureVector((1.0,) * 31)], [3], p)
    header, row = p.read_text().splitlines()
    assert header.split(",") == list(FEATURE_NAMES) + ["label"]
    assert row.split(",")[-1] == "3.0"


def test_cosine_self_similarity():
    enc = HashedContextEncoder(dim=64)
    v = enc.encode("Hot Springs")
    assert float(v @ v) == pytest.approx(1.0, abs=1e-9)


label_text = st.text(alphabet=st.sampled_from("aB #,.Σσ-é1"), min_size=1, max_size=12)


@settings(max_examples=150, deadline=None)
@given(label_text, label_text, st.one_of(st.none(), st.text(alphabet="aBb #Σσ.", max_size=40)),
       st.integers(0, 7), st.integers(0, 30), st.floats(0, 1))
def test_features_finite_and_counts_ordered(anchor, label, abstract, hop, rank, conf):
    anchor = anchor.strip() or "x"
    ent = Entity(EX + "c", label.strip() or "y", {"georss:point": ["0 0"]}, short_abstract=abstract,
                 long_abstract=abstract)
    kg = build_graph([ent, Entity(EX + "s", anchor)])
    cand = Candidate(EX + "c", GeoCoordinate(0, 0), hop, rank, min(rank, 3))
    fv = compute_features(Annotation("d", anchor, 0, len(anchor), EX + "s", conf), cand, kg,
                          anchor_vectors=HashedContextEncoder(dim=32), document_text=anchor)
    assert len(fv) == 31 and all(math.isfinite(v) for v in fv.values)
    assert fv["anchor_in_short_abstract_ci"] >= fv["anchor_in_short_abstract"]
    assert fv["anchor_in_long_abstract_ci"] >= fv["anchor_in_long_abstract"]
    assert -1.0 <= fv["bert_similarity"] <= 1.0
    assert fv == compute_features(Annotation("d", anchor, 0, len(anchor), EX + "s", conf), cand, kg,
                                  anchor_vectors=HashedContextEncoder(dim=32), document_text=anchor)
