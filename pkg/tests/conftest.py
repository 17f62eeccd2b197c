import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kggeo.embeddings import load_embeddings  # noqa: E402
from kggeo.kg import load_knowledge_graph, toy_graph_path  # noqa: E402

DBR = "http://dbpedia.org/resource/"
TOY = {
    "bath": DBR + "Bathtub", "thermae": DBR + "Thermae", "Bath": DBR + "Bath,_Somerset",
    "UK": DBR + "United_Kingdom", "Saturnia": DBR + "Saturnia", "Italy": DBR + "Italy",
    "Bata": DBR + "Bata,_Equatorial_Guinea", "EqG": DBR + "Equatorial_Guinea",
    "Hot Springs": DBR + "Hot_Springs", "Colorado": DBR + "Colorado", "Bach": DBR + "Johann_Sebastian_Bach",
}


def data_file(name: str) -> Path:
    return Path(str(resources.files("kggeo.data").joinpath(name)))


@pytest.fixture(scope="session")
def toy_kg():
    return load_knowledge_graph(toy_graph_path())


@pytest.fixture(scope="session")
def toy_emb():
    return load_embeddings(data_file("toy_bath.emb"))


@pytest.fixture(scope="session")
def toy_aliases():
    return data_file("toy_bath_aliases.tsv")


@pytest.fixture(scope="session")
def corpus():
    from kggeo.synthetic import generate_corpus
    return generate_corpus(0)


@pytest.fixture(scope="session")
def synthetic_selector(corpus):
    """Selector trained on the synthetic training split at L = 5 and calibrated on validation."""
    from kggeo.evaluation import stratified_split
    from kggeo.expansion import ExpansionConfig, Strategy, precompute_expansions
    from kggeo.features import HashedContextEncoder
    from kggeo.pipeline import FeatureInputs, build_instances, build_validation_set
    from kggeo.selection import Algorithm, Hyperparameters, SelectionModel, calibrate_threshold, train

    lex = corpus.lexicon()
    table = precompute_expansions(corpus.kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 5))
    split = stratified_split(corpus.documents, seed=0)
    by_id = {d.id: d for d in corpus.documents}
    inputs = FeatureInputs(anchor_vectors=HashedContextEncoder())
    inst = build_instances([by_id[i] for i in split.train], lex, corpus.kg, table, 5, 50, inputs)
    ens = train(inst, Algorithm.GBDT, Hyperparameters(num_trees=100), seed=0)
    val = build_validation_set([by_id[i] for i in split.validation], lex, corpus.kg, table, 5, inputs)
    return SelectionModel(ens, calibrate_threshold(ens, val, 50))


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    lines = getattr(results, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
