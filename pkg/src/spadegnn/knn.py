"""Exact k-nearest-neighbor graphs by brute-force search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import GraphError, SparseGraph

METRICS = ("euclidean", "cosine")

# rows of the distance matrix computed per block; bounds the (block, N, m) temporary
_BLOCK_ELEMS = 2**24


@dataclass(frozen=True)
class KnnConfig:
    k: int = 10
    metric: str = "euclidean"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise GraphError(f"unknown metric {self.metric!r}; choose from {METRICS}")
        if self.k < 1:
            raise GraphError(f"k must be >= 1, got {self.k}")


def _distance_block(x: np.ndarray, rows: slice, metric: str) -> np.ndarray:
    q = x[rows]
    if metric == "euclidean":
        diff = q[:, None, :] - x[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    norms[norms == 0] = 1.0
    unit = x / norms[:, None]
    return 1.0 - unit[rows] @ unit.T


def knn_lists(points: np.ndarray, cfg: KnnConfig) -> np.ndarray:
    """(N, k) array of each point's k nearest other points, closest first.

    Equal distances are resolved in favour of the smaller node index.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise GraphError("points must be an N x m matrix")
    n, m = x.shape
    if n < 2:
        raise GraphError("need at least two points")
    if not 1 <= cfg.k < n:
        raise GraphError(f"k must satisfy 1 <= k < N={n}, got {cfg.k}")
    if np.isnan(x).any():
        raise GraphError("points contain NaN")
    block = max(1, _BLOCK_ELEMS // max(1, n * m)) if cfg.metric == "euclidean" else 512
    out = np.empty((n, cfg.k), dtype=np.int64)
    for start in range(0, n, block):
        rows = slice(start, min(n, start + block))
        dist = _distance_block(x, rows, cfg.metric)
        idx = np.arange(rows.start, rows.stop)
        dist[idx - start, idx] = np.inf
        # stable sort keeps ascending index order among equal distances
        order = np.argsort(dist, axis=1, kind="stable")
        out[rows] = order[:, : cfg.k]
    return out


def knn_graph(points: np.ndarray, cfg: KnnConfig | None = None) -> SparseGraph:
    """Union-symmetrized kNN graph with unit edge weights."""
    cfg = cfg or KnnConfig()
    nbrs = knn_lists(points, cfg)
    n = nbrs.shape[0]
    rows = np.repeat(np.arange(n), cfg.k)
    cols = nbrs.ravel()
    a = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    a = a.maximum(a.T).tocsr()
    a.sort_indices()
    return SparseGraph(a)
