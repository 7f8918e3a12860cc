#!/usr/bin/env python3
"""Multi-seed Cora experiment: baseline vs robust-subset accuracy, and
accuracy of the lowest / highest scoring test quartiles.

    python scripts/cora_seeds.py --seeds 0 1 2 3 4
    python scripts/cora_seeds.py --knn-metric cosine --subgraph-space embeddings
"""

import argparse
import json
import time

import numpy as np

from spadegnn.data import load_cora_dir, make_split
from spadegnn.pipeline import PipelineConfig, run_robust_pipeline, run_stage_one


def quartile_accuracies(scores, pred, labels, test_ids):
    order = test_ids[np.argsort(scores[test_ids], kind="stable")]
    q = int(np.floor(0.25 * len(test_ids) + 0.5))
    correct = pred == labels
    return float(correct[order[:q]].mean()), float(correct[order[-q:]].mean())


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", default="data/cora")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--fraction", type=float, default=0.40)
    p.add_argument("--knn-k", type=int, default=10)
    p.add_argument("--knn-metric", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--g-input", choices=["given_graph", "knn_features"], default="given_graph")
    p.add_argument("--subgraph-space", choices=["raw_features", "embeddings"], default="raw_features")
    p.add_argument("--centroid-space", choices=["raw_features", "embeddings"], default="raw_features")
    p.add_argument("--json", help="also write per-seed rows here")
    args = p.parse_args()

    ds = load_cora_dir(args.data)
    head = f"{'seed':>4} {'base':>7} {'base@R':>7} {'robust':>7} {'comb':>7} {'lowQ':>7} {'highQ':>7} {'sec':>6}"
    print(head)
    rows = []
    for seed in args.seeds:
        cfg = PipelineConfig(
            robust_fraction=args.fraction, knn_k=args.knn_k, knn_metric=args.knn_metric,
            g_input_source=args.g_input, subgraph_space=args.subgraph_space,
            centroid_space=args.centroid_space, seed=seed,
        )
        split = make_split(ds, 20, seed)
        t = time.perf_counter()
        s1 = run_stage_one(ds, split, cfg)
        rep = run_robust_pipeline(ds, split, cfg, stage_one=s1)
        low, high = quartile_accuracies(s1.scores.scores, s1.baseline_pred, ds.labels, split.test_ids)
        row = dict(seed=seed, baseline=rep.baseline_accuracy, baseline_robust=rep.baseline_robust_accuracy,
                   robust=rep.robust_accuracy, combined=rep.combined_accuracy, low_q=low, high_q=high,
                   seconds=time.perf_counter() - t)
        rows.append(row)
        print(f"{seed:>4} {row['baseline']:7.4f} {row['baseline_robust']:7.4f} {row['robust']:7.4f} "
              f"{row['combined']:7.4f} {low:7.4f} {high:7.4f} {row['seconds']:6.1f}")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in rows[0] if k != "seed"}
    print(f"{'mean':>4} {mean['baseline']:7.4f} {mean['baseline_robust']:7.4f} {mean['robust']:7.4f} "
          f"{mean['combined']:7.4f} {mean['low_q']:7.4f} {mean['high_q']:7.4f} {mean['seconds']:6.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"args": vars(args), "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
