import csv
from dataclasses import replace

import numpy as np
import pytest

from spadegnn import pipeline
from spadegnn.data import make_split
from spadegnn.gcn import GcnHyperparams
from spadegnn.knn import KnnConfig, knn_graph
from spadegnn.pipeline import (
    PipelineConfig,
    PipelineError,
    assign_nearest,
    assign_nearest_many,
    compute_centroids,
    evaluate_robustness,
    run_baseline,
    run_robust_pipeline,
    run_stage_one,
    write_predictions_csv,
)
from spadegnn.spade import SpadeScores

from conftest import noisy_dataset, two_cluster_dataset

FAST = GcnHyperparams(hidden=8, epochs=100)


def small_cfg(**kw):
    kw.setdefault("robust_fraction", 0.6)
    return PipelineConfig(knn_k=kw.pop("knn_k", 4), gcn=kw.pop("gcn", FAST), **kw)


# ---------------------------------------------------------------- centroids

def test_centroid_mean_example():
    c = compute_centroids(np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 5.0]]), np.array([0, 0, 1]), 2)
    assert c.vectors[0].tolist() == [1.0, 1.0]
    assert c.vectors[1].tolist() == [5.0, 5.0]


def test_single_point_per_class():
    pts = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(compute_centroids(pts, np.array([2, 0, 1]), 3).vectors, pts[[1, 2, 0]])


def test_undefined_class_recorded():
    c = compute_centroids(np.ones((3, 2)), np.array([0, 0, 2]), 4)
    assert c.undefined_classes() == [1, 3]
    assert np.all(np.isnan(c.vectors[1]))


def test_centroid_mean_oracle(rng):
    x = rng.normal(size=(100, 8))
    y = rng.integers(0, 5, size=100)
    c = compute_centroids(x, y, 5)
    for k in range(5):
        rows = [x[i] for i in range(100) if y[i] == k]
        expect = sum(rows) / len(rows)
        assert np.allclose(c.vectors[k], expect, atol=1e-12, rtol=0)


def test_assign_examples():
    c = compute_centroids(np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([0, 1]), 2)
    assert assign_nearest(c, np.array([1.0, 0.0])) == 0
    assert assign_nearest(c, np.array([5.0, 0.0])) == 0  # equidistant -> lowest class
    assert assign_nearest(c, np.array([5.1, 0.0])) == 1


def test_assign_skips_undefined():
    c = compute_centroids(np.array([[0.0], [10.0]]), np.array([1, 2]), 3)
    assert assign_nearest(c, np.array([-100.0])) == 1


def test_assign_all_undefined_errors():
    c = compute_centroids(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    with pytest.raises(PipelineError):
        assign_nearest(c, np.zeros(2))


def test_assign_brute_force(rng):
    c = compute_centroids(rng.normal(size=(30, 4)), rng.integers(0, 6, size=30), 6)
    pts = rng.normal(size=(1000, 4))
    got = assign_nearest_many(c, pts)
    for i, p in enumerate(pts):
        best, best_d = -1, np.inf
        for k in range(6):
            if not c.defined[k]:
                continue
            d = float(np.sum((p - c.vectors[k]) ** 2))
            if d < best_d:
                best, best_d = k, d
        assert got[i] == best


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [dict(robust_fraction=0.0), dict(robust_fraction=1.2), dict(spade_k=0),
                                 dict(subgraph_space="graph"), dict(g_input_source="x")])
def test_config_validation(bad):
    with pytest.raises(PipelineError):
        PipelineConfig(**bad)


def test_config_seed_reaches_gcn():
    assert PipelineConfig(seed=7).gcn_hyperparams().seed == 7


# ------------------------------------------------------------------ end to end

def test_two_cluster_toy_is_perfect():
    ds = two_cluster_dataset()
    split = make_split(ds, per_class_train=5, seed=0)
    # dropout off: with five labels per class its noise alone can flip a node
    cfg = small_cfg(gcn=GcnHyperparams(hidden=8, epochs=200, dropout=0.0), robust_fraction=0.5)
    rep = run_robust_pipeline(ds, split, cfg)
    assert run_baseline(ds, split, cfg) == 1.0
    assert rep.combined_accuracy == 1.0
    # centroid assignments against a brute-force nearest-centroid pass
    robust = np.flatnonzero(rep.is_robust)
    lab = rep.predictions[robust].copy()
    is_train = np.isin(robust, split.train_ids)
    lab[is_train] = ds.labels[robust[is_train]]
    cents = [ds.features[robust][lab == k].mean(axis=0) for k in range(2)]
    for i in np.flatnonzero(~rep.is_robust):
        d = [np.sum((ds.features[i] - ck) ** 2) for ck in cents]
        assert rep.predictions[i] == int(np.argmin(d))


def test_report_consistency_and_partition(tmp_path):
    ds = noisy_dataset()
    split = make_split(ds, per_class_train=5, seed=1)
    cfg = small_cfg(seed=1)
    s1 = run_stage_one(ds, split, cfg)
    rep = run_robust_pipeline(ds, split, cfg, stage_one=s1)
    path = tmp_path / "pred.csv"
    write_predictions_csv(rep, ds, split, s1.scores, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == ds.n
    test = [r for r in rows if r["split"] == "test"]
    assert len(test) == len(split.test_ids)
    correct = sum(r["pred"] == r["label"] for r in test)
    assert correct / len(test) == rep.combined_accuracy
    # each test node is predicted by exactly one route, matching its robustness flag
    for r in test:
        assert (r["source"] == "gnn") == (r["is_robust"] == "1")
    assert rep.n_test_robust + rep.n_test_rest == len(split.test_ids)
    weighted = (rep.robust_accuracy * rep.n_test_robust + rep.rest_accuracy * rep.n_test_rest) / len(test)
    assert weighted == pytest.approx(rep.combined_accuracy, abs=1e-12)


def test_determinism():
    ds = noisy_dataset(seed=2)
    split = make_split(ds, per_class_train=8, seed=3)
    cfg = small_cfg(seed=3)
    a = run_robust_pipeline(ds, split, cfg)
    b = run_robust_pipeline(ds, split, cfg)
    assert a.summary() == b.summary()
    assert np.array_equal(a.predictions, b.predictions)


def test_stage_one_reuse_matches_fresh_run():
    ds = noisy_dataset(seed=4)
    split = make_split(ds, per_class_train=5, seed=0)
    cfg = small_cfg()
    s1 = run_stage_one(ds, split, cfg)
    for f in (0.5, 0.8):
        c = replace(cfg, robust_fraction=f)
        assert run_robust_pipeline(ds, split, c, stage_one=s1).summary() == run_robust_pipeline(ds, split, c).summary()


def test_full_fraction_is_not_the_baseline():
    # every node goes through the stage-two GCN, but on a feature kNN graph
    # rather than the given graph, so predictions differ from the baseline
    ds = noisy_dataset(seed=5)
    split = make_split(ds, per_class_train=5, seed=0)
    cfg = small_cfg(robust_fraction=1.0)
    s1 = run_stage_one(ds, split, cfg)
    rep = run_robust_pipeline(ds, split, cfg, stage_one=s1)
    assert rep.n_robust == ds.n and rep.n_test_rest == 0
    assert np.all(rep.source == "gnn")
    assert np.isnan(rep.rest_accuracy)
    assert rep.combined_accuracy == rep.robust_accuracy
    assert rep.baseline_robust_accuracy == rep.baseline_accuracy
    assert not np.array_equal(rep.predictions, s1.baseline_pred)


def test_missing_class_in_robust_subset():
    ds = noisy_dataset(seed=6)
    split = make_split(ds, per_class_train=5, seed=0)
    cfg = small_cfg(robust_fraction=0.3)
    s1 = run_stage_one(ds, split, cfg)
    # push every class-0 train node to the most vulnerable end of the ranking
    scores = np.arange(ds.n, dtype=float)
    victims = split.train_ids[ds.labels[split.train_ids] == 0]
    scores[victims] += 1000.0
    s1 = replace(s1, scores=SpadeScores(scores, np.argsort(scores, kind="stable"), np.zeros(ds.n, bool)))
    with pytest.raises(PipelineError, match="c0"):
        run_robust_pipeline(ds, split, cfg, stage_one=s1)


def test_embedding_spaces_run():
    ds = two_cluster_dataset(seed=3)
    split = make_split(ds, per_class_train=5, seed=0)
    cfg = small_cfg(subgraph_space="embeddings", centroid_space="embeddings", robust_fraction=0.5)
    rep = run_robust_pipeline(ds, split, cfg)
    assert rep.combined_accuracy == 1.0


def test_self_consistent_pencil(monkeypatch):
    # embeddings := features and G_input := kNN(features) gives G_out == G_in
    ds = noisy_dataset(seed=7)
    split = make_split(ds, per_class_train=5, seed=0)
    real_fit = pipeline._fit

    def fit_with_identity_embedding(features, graph, labels, train_ids, c, cfg):
        model, _, pred = real_fit(features, graph, labels, train_ids, c, cfg)
        return model, np.array(features, copy=True), pred

    monkeypatch.setattr(pipeline, "_fit", fit_with_identity_embedding)
    cfg = small_cfg(g_input_source="knn_features")
    eigen, scores = evaluate_robustness(ds, split, cfg)
    assert np.allclose(eigen.eigenvalues, 1.0, atol=1e-8)
    assert len(scores.scores) == ds.n
    s1 = run_stage_one(ds, split, cfg)
    assert (s1.g_input.adjacency != s1.g_output.adjacency).nnz == 0
    assert (s1.g_input.adjacency != knn_graph(ds.features, KnnConfig(4)).adjacency).nnz == 0


@pytest.mark.slow
def test_cora_scores_shape(cora):
    split = make_split(cora, 20, seed=0)
    eigen, scores = evaluate_robustness(cora, split, PipelineConfig())
    assert scores.scores.shape == (2708,)
    assert eigen.k == 7
    assert np.all(scores.scores >= 0)
