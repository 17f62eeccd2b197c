"""Train, calibrate and test on the synthetic benchmark, then compare L values.

Run with ``python demos/synthetic_benchmark.py``. The same calibrated
selector is applied with growing expansion sizes, so any change in F1 comes
from the candidates that expansion adds.
"""

from kggeo.evaluation import evaluate, stratified_split
from kggeo.expansion import ExpansionConfig, Strategy, precompute_expansions
from kggeo.features import HashedContextEncoder
from kggeo.pipeline import FeatureInputs, build_instances, build_validation_set, geoparse_all, strategy_report
from kggeo.selection import (Algorithm, Hyperparameters, SelectionModel, calibrate_threshold, feature_importance,
                             train)
from kggeo.synthetic import generate_corpus

L_TRAIN = 5


def main():
    corpus = generate_corpus(0)
    by_id = {d.id: d for d in corpus.documents}
    split = stratified_split(corpus.documents, seed=0)
    train_docs, val_docs, test_docs = ([by_id[i] for i in ids] for ids in (split.train, split.validation,
                                                                            split.test))
    print(f"{len(corpus.kg)} entities; {len(train_docs)}/{len(val_docs)}/{len(test_docs)} documents")

    lex = corpus.lexicon()
    inputs = FeatureInputs(anchor_vectors=HashedContextEncoder())
    table = precompute_expansions(corpus.kg, ExpansionConfig(Strategy.TOPOLOGICAL_SPE, 14))
    ens = train(build_instances(train_docs, lex, corpus.kg, table, L_TRAIN, 50, inputs), Algorithm.GBDT,
                Hyperparameters(num_trees=100), seed=0)
    val = build_validation_set(val_docs, lex, corpus.kg, table, L_TRAIN, inputs)
    model = SelectionModel(ens, calibrate_threshold(ens, val, 50))
    print(f"calibrated c_th = {model.c_th:.4f}")

    truths = {d.id: d.ground_truth for d in test_docs}
    print(" L   precision  recall  F1")
    for L in (0, 1, 2, 5, 14):
        preds, _ = geoparse_all(test_docs, corpus.kg, lex, table, model, inputs, L)
        r = evaluate(preds, truths, 50)
        print(f"{L:>2}   {r.precision:9.3f}  {r.recall:6.3f}  {r.f1:.3f}")

    report = strategy_report(corpus.kg, corpus.documents, lex, [Strategy.SPELLING, Strategy.TOPOLOGICAL_SPE],
                             [0, 1, 2, 5, 14], 50)
    print()
    print(report.to_csv(), end="")

    print("\ntop feature groups by normalized gain")
    for group, gain in sorted(feature_importance(model, True).items(), key=lambda kv: -kv[1])[:4]:
        print(f"  {group:<12} {gain:.3f}")


if __name__ == "__main__":
    main()
