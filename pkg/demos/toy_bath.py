"""Expansions and a prediction on the shipped 11-node Bath graph.

Run with ``python demos/toy_bath.py``. The selector is trained on the
synthetic benchmark because the toy graph is too small to learn from.
"""

from kggeo.annotator import Document, build_lexicon
from kggeo.embeddings import load_embeddings
from kggeo.evaluation import stratified_split
from kggeo.expansion import (ExpansionConfig, Strategy, Tiebreak, expand_latent, expand_spelling,
                             expand_topological, precompute_expansions)
from kggeo.features import HashedContextEncoder
from kggeo.kg import load_knowledge_graph, toy_graph_path
from kggeo.pipeline import FeatureInputs, build_instances, build_validation_set, geoparse
from kggeo.selection import Algorithm, Hyperparameters, SelectionModel, calibrate_threshold, train
from kggeo.synthetic import generate_corpus

DBR = "http://dbpedia.org/resource/"


def show(title, cands, kg):
    print(f"{title:<24}", [kg.label(c.entity) for c in cands])


def trained_selector(inputs):
    corpus = generate_corpus(0)
    by_id = {d.id: d for d in corpus.documents}
    split = stratified_split(corpus.documents, seed=0)
    lex = corpus.lexicon()
    table = precompute_expansions(corpus.kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 5))
    inst = build_instances([by_id[i] for i in split.train], lex, corpus.kg, table, 5, 50, inputs)
    ens = train(inst, Algorithm.GBDT, Hyperparameters(num_trees=100), seed=0)
    val = build_validation_set([by_id[i] for i in split.validation], lex, corpus.kg, table, 5, inputs)
    return SelectionModel(ens, calibrate_threshold(ens, val, 50))


def main():
    from importlib import resources
    data = resources.files("kggeo.data")
    kg = load_knowledge_graph(toy_graph_path())
    emb = load_embeddings(str(data.joinpath("toy_bath.emb")))
    start = DBR + "Bathtub"
    show("spelling, L=2", expand_spelling(start, 2, kg), kg)
    show("latent, L=2", expand_latent(start, 2, kg, emb), kg)
    show("topological-spe, L=2", expand_topological(start, 2, Tiebreak.SPELLING, kg), kg)
    show("topological-lat, L=2", expand_topological(start, 2, Tiebreak.LATENT, kg, emb), kg)

    inputs = FeatureInputs(anchor_vectors=HashedContextEncoder())
    model = trained_selector(inputs)
    lex = build_lexicon(kg, str(data.joinpath("toy_bath_aliases.tsv")))
    table = precompute_expansions(kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 5))
    doc = Document("toy", "Relaxing in Bath, visiting its Roman heritage")
    for p in geoparse(doc, kg, lex, table, model, inputs, 5):
        print(f"{doc.text[p.span[0]:p.span[1]]!r} -> {kg.label(p.entity)} "
              f"({p.coordinate.lat:.4f}, {p.coordinate.lon:.4f}) score {p.score:.3f}")


if __name__ == "__main__":
    main()
