"""Geoparsing over a knowledge graph.

Anchors found in short texts are linked to graph entities. Each entity is
expanded into a vector of geographic candidates, and a tree-ensemble
regressor picks the candidate whose coordinates to report.
"""

__version__ = "0.1.0"

from .annotator import Annotation, Document, GroundTruth, Lexicon, annotate, build_lexicon, load_annotations
from .embeddings import EmbeddingStore, cosine, load_embeddings
from .evaluation import EvaluationReport, GeoPrediction, evaluate, geo_distance, stratified_split
from .expansion import (Candidate, ExpansionConfig, ExpansionTable, Strategy, Tiebreak, expand_latent,
                        expand_spelling, expand_topological, jaccard_distance, max_theoretical_recall,
                        precompute_expansions)
from .features import FEATURE_NAMES, FeatureVector, TagRecord, compute_features, edit_distance
from .kg import (Entity, GeoCoordinate, Granularity, KnowledgeGraph, build_graph, load_knowledge_graph,
                 parse_geo_coordinates, same_as_closure)
from .pipeline import FeatureInputs, geoparse, load_dataset, strategy_report
from .selection import (Algorithm, Hyperparameters, LabeledInstance, RegressionEnsemble, SelectionModel,
                        calibrate_threshold, feature_importance, label_candidates, predict, random_search,
                        select_best, train)

__all__ = [
    "Algorithm", "Annotation", "Candidate", "Document", "EmbeddingStore", "Entity", "EvaluationReport",
    "ExpansionConfig", "ExpansionTable", "FEATURE_NAMES", "FeatureInputs", "FeatureVector", "GeoCoordinate",
    "GeoPrediction", "Granularity", "GroundTruth", "Hyperparameters", "KnowledgeGraph", "LabeledInstance",
    "Lexicon", "RegressionEnsemble", "SelectionModel", "Strategy", "TagRecord", "Tiebreak", "annotate",
    "build_graph", "build_lexicon", "calibrate_threshold", "compute_features", "cosine", "edit_distance",
    "evaluate", "expand_latent", "expand_spelling", "expand_topological", "feature_importance", "geo_distance",
    "geoparse", "jaccard_distance", "label_candidates", "load_annotations", "load_dataset", "load_embeddings",
    "load_knowledge_graph", "max_theoretical_recall", "parse_geo_coordinates", "precompute_expansions",
    "predict", "random_search", "same_as_closure", "select_best", "stratified_split", "strategy_report", "train",
]
