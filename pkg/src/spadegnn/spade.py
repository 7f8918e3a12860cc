"""Per-node SPADE vulnerability scores and robust-node selection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import SparseGraph


class SpadeError(ValueError):
    pass


@dataclass(frozen=True)
class SpadeScores:
    scores: np.ndarray
    ranking: np.ndarray  # node ids, ascending score, ties by id
    isolated: np.ndarray  # bool mask: no neighbors in G_input, score pinned to 0

    @property
    def n(self) -> int:
        return len(self.scores)

    def ranks(self) -> np.ndarray:
        """Position of every node in ``ranking`` (0 = most robust)."""
        r = np.empty(self.n, dtype=np.int64)
        r[self.ranking] = np.arange(self.n)
        return r


@dataclass(frozen=True)
class RobustPartition:
    robust_ids: np.ndarray  # sorted
    rest_ids: np.ndarray  # sorted
    fraction: float


def ascending_ranking(scores: np.ndarray) -> np.ndarray:
    return np.argsort(scores, kind="stable")


def spade_scores(vk: np.ndarray, g_in: SparseGraph, weighted: bool = False) -> SpadeScores:
    """Mean squared embedding distortion over each node's G_input neighbors.

    For node i this is ``mean_j ||V_k^T (e_i - e_j)||^2`` over neighbors j,
    i.e. the squared distance between rows i and j of ``vk``. With
    ``weighted=True`` the mean uses the G_input edge weights instead.
    """
    vk = np.asarray(vk, dtype=np.float64)
    if vk.ndim != 2 or vk.shape[0] != g_in.n:
        raise SpadeError(f"V_k has shape {vk.shape}, expected ({g_in.n}, k)")
    a = g_in.adjacency.tocoo()
    diff = vk[a.row] - vk[a.col]
    d2 = np.einsum("ij,ij->i", diff, diff)
    w = a.data if weighted else np.ones_like(a.data)
    num = np.bincount(a.row, weights=w * d2, minlength=g_in.n)
    den = np.bincount(a.row, weights=w, minlength=g_in.n)
    isolated = den == 0
    scores = np.divide(num, den, out=np.zeros(g_in.n), where=~isolated)
    return SpadeScores(scores, ascending_ranking(scores), isolated)


def robust_count(fraction: float, n: int) -> int:
    """round(fraction * n), halves rounded away from zero."""
    return int(math.floor(fraction * n + 0.5))


def select_robust(s: SpadeScores, fraction: float) -> RobustPartition:
    if not 0.0 < fraction <= 1.0:
        raise SpadeError(f"fraction must lie in (0, 1], got {fraction}")
    m = robust_count(fraction, s.n)
    if m == 0:
        raise SpadeError(f"fraction {fraction} selects no nodes out of {s.n}")
    robust = np.sort(s.ranking[:m])
    rest = np.sort(s.ranking[m:])
    return RobustPartition(robust, rest, float(fraction))


def write_scores_csv(s: SpadeScores, path) -> None:
    """CSV with columns node_id,score,rank,is_isolated (rank 0 = most robust)."""
    ranks = s.ranks()
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "score", "rank", "is_isolated"])
        for i in range(s.n):
            w.writerow([i, repr(float(s.scores[i])), int(ranks[i]), int(s.isolated[i])])
