"""Two-stage robust-node classification.

Stage one trains a GCN on the given graph, builds a kNN graph over its hidden
embeddings, scores every node with SPADE and keeps the lowest-scoring
fraction. Stage two trains a fresh GCN on a kNN graph over the robust nodes
only, then labels every remaining node by its nearest class centroid.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import gcn
from .data import Dataset, Split
from .gcn import GcnHyperparams, GcnModel
from .graph import SparseGraph, laplacian, propagation_matrix
from .knn import KnnConfig, knn_graph
from .spade import RobustPartition, SpadeScores, select_robust, spade_scores
from .spectral import EigenSubspace, pencil_topk

SPACES = ("raw_features", "embeddings")
INPUT_SOURCES = ("given_graph", "knn_features")


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    robust_fraction: float = 0.40
    knn_k: int = 10
    knn_metric: str = "euclidean"
    spade_k: int | None = None  # None -> number of classes
    subgraph_space: str = "raw_features"
    centroid_space: str = "raw_features"
    g_input_source: str = "given_graph"
    propagation: str = "normalized"
    spade_weighted: bool = False
    pencil_regularization: float = 0.0
    gcn: GcnHyperparams = field(default_factory=GcnHyperparams)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.robust_fraction <= 1.0:
            raise PipelineError(f"robust_fraction must lie in (0, 1], got {self.robust_fraction}")
        if self.spade_k is not None and self.spade_k < 1:
            raise PipelineError("spade_k must be >= 1")
        if self.subgraph_space not in SPACES or self.centroid_space not in SPACES:
            raise PipelineError(f"spaces must be one of {SPACES}")
        if self.g_input_source not in INPUT_SOURCES:
            raise PipelineError(f"g_input_source must be one of {INPUT_SOURCES}")

    def resolved_spade_k(self, num_classes: int) -> int:
        return self.spade_k if self.spade_k is not None else num_classes

    def gcn_hyperparams(self) -> GcnHyperparams:
        return GcnHyperparams(**{**asdict(self.gcn), "seed": self.seed})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Centroids:
    vectors: np.ndarray  # (C, m); rows of undefined classes are NaN
    counts: np.ndarray  # (C,)

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    def undefined_classes(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.counts == 0)]


@dataclass
class StageOne:
    """Artifacts of the robustness evaluation, reusable across robust fractions."""

    g_input: SparseGraph
    baseline_model: GcnModel
    baseline_pred: np.ndarray
    embeddings: np.ndarray
    g_output: SparseGraph
    eigen: EigenSubspace
    scores: SpadeScores
    timing: dict[str, float] = field(default_factory=dict)


@dataclass
class PipelineReport:
    baseline_accuracy: float
    baseline_robust_accuracy: float  # baseline GCN restricted to robust test nodes
    robust_accuracy: float  # stage-two GCN on robust test nodes
    rest_accuracy: float  # centroid assignment on non-robust test nodes
    combined_accuracy: float
    n_test_robust: int
    n_test_rest: int
    n_robust: int
    config: dict
    split: dict
    eigenvalues: list[float]
    subgraph_k: int
    predictions: np.ndarray  # final label per node
    source: np.ndarray  # "gnn" or "centroid" per node
    is_robust: np.ndarray
    timing: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        """JSON-ready dict without per-node arrays and without timing."""
        return {
            "baseline_accuracy": self.baseline_accuracy,
            "baseline_robust_accuracy": self.baseline_robust_accuracy,
            "robust_accuracy": self.robust_accuracy,
            "rest_accuracy": self.rest_accuracy,
            "combined_accuracy": self.combined_accuracy,
            "n_robust": self.n_robust,
            "n_test_robust": self.n_test_robust,
            "n_test_rest": self.n_test_rest,
            "subgraph_k": self.subgraph_k,
            "eigenvalues": self.eigenvalues,
            "config": self.config,
            "split": self.split,
        }


def gcn_features(x: np.ndarray):
    """Sparse view of mostly-zero feature matrices; GCN training is much faster on it."""
    if x.size and np.count_nonzero(x) <= 0.1 * x.size:
        return sp.csr_matrix(x)
    return x


def input_graph(ds: Dataset, cfg: PipelineConfig) -> SparseGraph:
    if cfg.g_input_source == "given_graph":
        return ds.graph
    return knn_graph(ds.features, KnnConfig(cfg.knn_k, cfg.knn_metric))


def _fit(ds_features, graph: SparseGraph, labels, train_ids, num_classes: int, cfg: PipelineConfig):
    hp = cfg.gcn_hyperparams()
    a_hat = propagation_matrix(graph, cfg.propagation)
    x = gcn_features(ds_features)
    model = gcn.init_model(x.shape[1], hp.hidden, num_classes, hp.seed, hp)
    model, _ = gcn.train(model, a_hat, x, labels, train_ids, hp)
    hidden, logits = gcn.forward(model, a_hat, x)
    return model, hidden, np.argmax(logits, axis=1)


def run_baseline(ds: Dataset, split: Split, cfg: PipelineConfig | None = None) -> float:
    """Test accuracy of a GCN trained on the full input graph."""
    cfg = cfg or PipelineConfig()
    _, _, pred = _fit(ds.features, input_graph(ds, cfg), ds.labels, split.train_ids, ds.num_classes, cfg)
    return gcn.accuracy(pred, ds.labels, split.test_ids)


def run_stage_one(ds: Dataset, split: Split, cfg: PipelineConfig | None = None) -> StageOne:
    cfg = cfg or PipelineConfig()
    timing = {}
    t = time.perf_counter()
    g_in = input_graph(ds, cfg)
    model, hidden, pred = _fit(ds.features, g_in, ds.labels, split.train_ids, ds.num_classes, cfg)
    timing["baseline_gcn"] = time.perf_counter() - t

    t = time.perf_counter()
    g_out = knn_graph(hidden, KnnConfig(cfg.knn_k, cfg.knn_metric))
    timing["output_knn"] = time.perf_counter() - t

    t = time.perf_counter()
    eigen = pencil_topk(
        laplacian(g_in),
        laplacian(g_out),
        cfg.resolved_spade_k(ds.num_classes),
        g_out=g_out,
        regularization=cfg.pencil_regularization,
    )
    timing["pencil"] = time.perf_counter() - t

    t = time.perf_counter()
    scores = spade_scores(eigen.v_k_matrix, g_in, weighted=cfg.spade_weighted)
    timing["spade"] = time.perf_counter() - t
    return StageOne(g_in, model, pred, hidden, g_out, eigen, scores, timing)


def evaluate_robustness(ds: Dataset, split: Split, cfg: PipelineConfig | None = None):
    """Eigensubspace of the (G_input, G_output) pencil and the per-node SPADE scores."""
    s1 = run_stage_one(ds, split, cfg)
    return s1.eigen, s1.scores


def compute_centroids(vectors: np.ndarray, assignments: np.ndarray, num_classes: int) -> Centroids:
    vectors = np.asarray(vectors, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    counts = np.bincount(assignments, minlength=num_classes)[:num_classes]
    sums = np.zeros((num_classes, vectors.shape[1]))
    np.add.at(sums, assignments, vectors)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, None]
    means[counts == 0] = np.nan
    return Centroids(means, counts)


def assign_nearest_many(centroids: Centroids, vectors: np.ndarray) -> np.ndarray:
    """Nearest defined centroid (Euclidean) for each row; ties go to the lowest class."""
    defined = np.flatnonzero(centroids.defined)
    if len(defined) == 0:
        raise PipelineError("no centroid is defined")
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    cents = centroids.vectors[defined]
    diff = vectors[:, None, :] - cents[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    return defined[np.argmin(dist, axis=1)]


def assign_nearest(centroids: Centroids, vector: np.ndarray) -> int:
    return int(assign_nearest_many(centroids, np.asarray(vector)[None, :])[0])


def _space(ds: Dataset, s1: StageOne, which: str) -> np.ndarray:
    return ds.features if which == "raw_features" else s1.embeddings


def _embed_rest(model, sub_graph, robust_x, rest_x, rest_space, robust_space, k, cfg) -> np.ndarray:
    """Stage-two hidden vectors for non-robust nodes.

    Each non-robust node is attached to its k nearest robust nodes in the
    subgraph space; the stage-two model is applied to that augmented graph.
    """
    nr, nq = robust_space.shape[0], rest_space.shape[0]
    rows, cols = [], []
    block = 256
    for start in range(0, nq, block):
        stop = min(nq, start + block)
        diff = rest_space[start:stop, None, :] - robust_space[None, :, :]
        if cfg.knn_metric == "euclidean":
            dist = np.einsum("ijk,ijk->ij", diff, diff)
        else:
            a = rest_space[start:stop]
            na = np.linalg.norm(a, axis=1, keepdims=True)
            nb = np.linalg.norm(robust_space, axis=1)[None, :]
            na[na == 0] = 1.0
            nb[nb == 0] = 1.0
            dist = 1.0 - (a @ robust_space.T) / (na * nb)
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        rows.append(np.repeat(np.arange(start, stop) + nr, k))
        cols.append(nn.ravel())
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    n = nr + nq
    extra = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    base = sp.block_diag([sub_graph.adjacency, sp.csr_matrix((nq, nq))]).tocsr()
    adj = base.maximum(extra.tocsr()).maximum(extra.T.tocsr())
    aug = SparseGraph.from_adjacency(adj)
    x = np.vstack([robust_x, rest_x])
    hidden, _ = gcn.forward(model, propagation_matrix(aug, cfg.propagation), gcn_features(x))
    return hidden[nr:]


def run_robust_pipeline(
    ds: Dataset,
    split: Split,
    cfg: PipelineConfig | None = None,
    stage_one: StageOne | None = None,
) -> PipelineReport:
    cfg = cfg or PipelineConfig()
    s1 = stage_one or run_stage_one(ds, split, cfg)
    timing = dict(s1.timing)
    C = ds.num_classes

    part: RobustPartition = select_robust(s1.scores, cfg.robust_fraction)
    robust = part.robust_ids
    nr = len(robust)
    is_robust = np.zeros(ds.n, dtype=bool)
    is_robust[robust] = True
    is_train = np.zeros(ds.n, dtype=bool)
    is_train[split.train_ids] = True

    local_train = np.flatnonzero(is_train[robust])
    trained_classes = np.unique(ds.labels[split.train_ids])
    have = np.unique(ds.labels[robust[local_train]])
    missing = np.setdiff1d(trained_classes, have)
    if len(missing):
        names = ", ".join(ds.class_names[c] for c in missing)
        raise PipelineError(
            f"robust subset ({nr} nodes) holds no training node for class(es): {names}; "
            "raise robust_fraction"
        )

    t = time.perf_counter()
    sub_space = _space(ds, s1, cfg.subgraph_space)
    subgraph_k = min(cfg.knn_k, nr - 1)
    if subgraph_k >= 1:
        sub_graph = knn_graph(sub_space[robust], KnnConfig(subgraph_k, cfg.knn_metric))
    else:
        sub_graph = SparseGraph(sp.csr_matrix((nr, nr)))
    timing["robust_knn"] = time.perf_counter() - t

    t = time.perf_counter()
    model, hidden_r, pred_r = _fit(ds.features[robust], sub_graph, ds.labels[robust], local_train, C, cfg)
    timing["robust_gcn"] = time.perf_counter() - t

    t = time.perf_counter()
    cent_labels = pred_r.copy()
    cent_labels[local_train] = ds.labels[robust[local_train]]
    rest = part.rest_ids
    if cfg.centroid_space == "raw_features":
        cent_vectors, rest_vectors = ds.features[robust], ds.features[rest]
    else:
        cent_vectors = hidden_r
        rest_vectors = (
            _embed_rest(
                model, sub_graph, ds.features[robust], ds.features[rest],
                sub_space[rest], sub_space[robust], max(subgraph_k, 1), cfg,
            )
            if len(rest)
            else np.zeros((0, hidden_r.shape[1]))
        )
    cents = compute_centroids(cent_vectors, cent_labels, C)
    undefined = [c for c in cents.undefined_classes() if c in set(trained_classes.tolist())]
    if undefined:
        names = ", ".join(ds.class_names[c] for c in undefined)
        raise PipelineError(f"no robust node represents class(es) {names}; raise robust_fraction")
    pred = np.empty(ds.n, dtype=np.int64)
    pred[robust] = pred_r
    if len(rest):
        pred[rest] = assign_nearest_many(cents, rest_vectors)
    timing["centroids"] = time.perf_counter() - t

    test = split.test_ids
    test_r = test[is_robust[test]]
    test_s = test[~is_robust[test]]
    return PipelineReport(
        baseline_accuracy=gcn.accuracy(s1.baseline_pred, ds.labels, test),
        baseline_robust_accuracy=gcn.accuracy(s1.baseline_pred, ds.labels, test_r),
        robust_accuracy=gcn.accuracy(pred, ds.labels, test_r),
        rest_accuracy=gcn.accuracy(pred, ds.labels, test_s),
        combined_accuracy=gcn.accuracy(pred, ds.labels, test),
        n_test_robust=int(len(test_r)),
        n_test_rest=int(len(test_s)),
        n_robust=nr,
        config=cfg.to_dict(),
        split=split.describe(),
        eigenvalues=[float(v) for v in s1.eigen.eigenvalues],
        subgraph_k=int(subgraph_k),
        predictions=pred,
        source=np.where(is_robust, "gnn", "centroid"),
        is_robust=is_robust,
        timing=timing,
    )


def write_predictions_csv(report: PipelineReport, ds: Dataset, split: Split, scores: SpadeScores, path) -> None:
    """Per-node dump: node_id,split,is_robust,spade_score,pred,label,source."""
    is_train = np.zeros(ds.n, dtype=bool)
    is_train[split.train_ids] = True
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "split", "is_robust", "spade_score", "pred", "label", "source"])
        for i in range(ds.n):
            w.writerow([
                i,
                "train" if is_train[i] else "test",
                int(report.is_robust[i]),
                repr(float(scores.scores[i])),
                int(report.predictions[i]),
                int(ds.labels[i]),
                report.source[i],
            ])
