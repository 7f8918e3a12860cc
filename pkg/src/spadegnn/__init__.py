"""Spectral robustness scoring (SPADE) for graph neural networks and a
robust-node two-stage classifier built on it."""

__version__ = "0.1.0"

from .data import Dataset, Split, load_cora, load_cora_dir, load_generic, make_split, write_generic
from .gcn import GcnHyperparams, GcnModel, forward, init_model, predict, train
from .graph import SparseGraph, build_graph, connected_components, laplacian, normalized_adjacency
from .knn import KnnConfig, knn_graph
from .pipeline import (
    PipelineConfig,
    PipelineReport,
    assign_nearest,
    compute_centroids,
    evaluate_robustness,
    run_baseline,
    run_robust_pipeline,
)
from .spade import RobustPartition, SpadeScores, select_robust, spade_scores
from .spectral import EigenSubspace, build_vk, pencil_topk
