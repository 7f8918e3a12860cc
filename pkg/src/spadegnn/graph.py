"""Sparse undirected graphs, Laplacians and GCN propagation operators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class SparseGraph:
    """Undirected weighted graph stored as a symmetric CSR adjacency.

    Rows hold sorted neighbor indices with strictly positive weights; the
    diagonal is always empty. Build instances through :func:`build_graph` or
    :meth:`from_adjacency` so the invariants hold.
    """

    adjacency: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return self.adjacency.nnz // 2

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def weights(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.data[a.indptr[i]:a.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        """Number of neighbors of every node (unweighted)."""
        return np.diff(self.adjacency.indptr)

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) int array with i < j, lexicographically sorted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]]).astype(np.int64)

    def edge_weights(self) -> np.ndarray:
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.data[order]

    def subgraph(self, nodes: np.ndarray) -> "SparseGraph":
        """Induced subgraph, relabelled to ``0..len(nodes)-1`` in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        sub = self.adjacency[nodes][:, nodes]
        return SparseGraph.from_adjacency(sub)

    def permute(self, perm: np.ndarray) -> "SparseGraph":
        """Relabel so that new node ``perm[i]`` is old node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return self.subgraph(inv)

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def is_symmetric(self) -> bool:
        diff = self.adjacency - self.adjacency.T
        return diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    @classmethod
    def from_adjacency(cls, adjacency) -> "SparseGraph":
        """Wrap an already symmetric adjacency; drops the diagonal and explicit zeros."""
        a = sp.csr_matrix(adjacency, dtype=np.float64, copy=True)
        a.setdiag(0.0)
        a.eliminate_zeros()
        a.sum_duplicates()
        a.sort_indices()
        if a.nnz and a.data.min() < 0:
            raise GraphError("negative edge weight in adjacency")
        g = cls(a)
        if not g.is_symmetric():
            raise GraphError("adjacency is not symmetric")
        return g


def build_graph(n: int, edges: Iterable) -> SparseGraph:
    """Build an undirected graph from ``(i, j, weight)`` triples.

    Self-loops are dropped and repeated pairs (in either orientation) are merged
    by keeping the largest weight.
    """
    if n < 0:
        raise GraphError(f"node count must be non-negative, got {n}")
    arr = np.asarray(list(edges), dtype=np.float64).reshape(-1, 3)
    rows = arr[:, 0]
    cols = arr[:, 1]
    w = arr[:, 2]
    if not (np.all(rows == np.floor(rows)) and np.all(cols == np.floor(cols))):
        raise GraphError("edge endpoints must be integers")
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    bad = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise GraphError(f"edge {k} ({rows[k]}, {cols[k]}) has an index out of range for n={n}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        k = int(np.flatnonzero(~(np.isfinite(w) & (w > 0)))[0])
        raise GraphError(f"edge {k} has non-positive or non-finite weight {w[k]}")

    keep = rows != cols
    lo = np.minimum(rows, cols)[keep]
    hi = np.maximum(rows, cols)[keep]
    w = w[keep]
    # sort by (lo, hi, weight) and take the last row of each pair -> max weight
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    if len(lo):
        last = np.ones(len(lo), dtype=bool)
        last[:-1] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, w = lo[last], hi[last], w[last]
    a = sp.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
        shape=(n, n),
    ).tocsr()
    a.sort_indices()
    return SparseGraph(a)


@dataclass(frozen=True)
class Laplacian:
    """L = D - W of a :class:`SparseGraph` (sparse CSR) with its weighted degree vector."""

    matrix: sp.csr_matrix
    degree: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def quadratic_form(self, x: np.ndarray) -> float:
        return float(x @ (self.matrix @ x))


def laplacian(g: SparseGraph) -> Laplacian:
    deg = np.asarray(g.adjacency.sum(axis=1)).ravel()
    mat = (sp.diags(deg) - g.adjacency).tocsr()
    mat.sort_indices()
    return Laplacian(mat, deg)


def normalized_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """D~^{-1/2} (A + I) D~^{-1/2} with D~ the weighted degree of A + I."""
    a = g.adjacency + sp.identity(g.n, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(d)
    out = (sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt)).tocsr()
    out.sort_indices()
    return out


def self_loop_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """A + I without normalization: self term plus plain neighbor sum."""
    out = (g.adjacency + sp.identity(g.n, format="csr")).tocsr()
    out.sort_indices()
    return out


PROPAGATIONS = {"normalized": normalized_adjacency, "sum": self_loop_adjacency}


def propagation_matrix(g: SparseGraph, mode: str = "normalized") -> sp.csr_matrix:
    try:
        return PROPAGATIONS[mode](g)
    except KeyError:
        raise GraphError(f"unknown propagation mode {mode!r}; choose from {sorted(PROPAGATIONS)}") from None


def connected_components(g: SparseGraph) -> np.ndarray:
    """Component label per node, numbered by first appearance in node order."""
    if g.n == 0:
        return np.zeros(0, dtype=np.int64)
    _, raw = csgraph.connected_components(g.adjacency, directed=False)
    # relabel so labels follow the lowest node index of each component
    _, first = np.unique(raw, return_index=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[raw]
