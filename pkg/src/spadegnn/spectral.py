"""Top eigenpairs of the Laplacian pencil (L_in, L_out) on the deflated subspace.

The pseudoinverse of L_out is never formed. Both Laplacians are projected onto
an orthonormal basis Q of the space orthogonal to the per-component indicator
vectors of G_out, where Q^T L_out Q is positive definite, and the symmetric
definite problem ``A y = lam B y`` is solved there. Eigenvectors ``v = Q y``
are then L_out-orthonormal, and on that space they are exactly the
eigenpairs of pinv(L_out) @ L_in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .graph import Laplacian, SparseGraph, connected_components


class SpectralError(ArithmeticError):
    pass


RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class EigenSubspace:
    eigenvalues: np.ndarray  # (k,), descending
    eigenvectors: np.ndarray  # (N, k), L_out-orthonormal columns
    v_k_matrix: np.ndarray  # (N, k), column m = v_m * sqrt(lambda_m)
    residuals: np.ndarray  # relative pencil residual per pair

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


def deflation_basis(labels: np.ndarray) -> np.ndarray:
    """Orthonormal basis (N, N - c) of vectors summing to zero on every component."""
    n = len(labels)
    c = int(labels.max()) + 1 if n else 0
    z = np.zeros((n, c))
    z[np.arange(n), labels] = 1.0
    z /= np.sqrt(z.sum(axis=0))
    q, _ = la.qr(z, mode="full")
    return q[:, c:]


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (first such entry on ties)."""
    v = np.array(vectors, copy=True)
    if v.size == 0:
        return v
    mag = np.abs(v)
    # magnitudes within rounding of the column max count as ties -> lowest index
    near_max = mag >= mag.max(axis=0) * (1.0 - 1e-9)
    pivots = np.argmax(near_max, axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def pencil_topk(
    l_in: Laplacian,
    l_out: Laplacian,
    k: int,
    g_out: SparseGraph | None = None,
    regularization: float = 0.0,
    check: bool = True,
) -> EigenSubspace:
    """Largest ``k`` eigenpairs of ``L_in v = lam L_out v`` with L_out's nullspace deflated.

    ``g_out`` supplies the component structure of the output graph; when
    omitted it is read off the sparsity pattern of ``l_out``.
    ``regularization`` adds a constant to the diagonal of the projected L_out
    (fallback for ill-conditioned output graphs; off by default).
    """
    n = l_out.n
    if l_in.n != n:
        raise SpectralError(f"Laplacians disagree on node count ({l_in.n} vs {n})")
    if g_out is None:
        off = l_out.matrix.copy()
        off.setdiag(0.0)
        off.eliminate_zeros()
        g_out = SparseGraph.from_adjacency(-off)
    labels = connected_components(g_out)
    n_comp = int(labels.max()) + 1 if n else 0
    dim = n - n_comp
    if not 1 <= k <= dim:
        raise SpectralError(
            f"k={k} out of range: G_out has {n_comp} components, so the deflated subspace has dimension {dim}"
        )

    q = deflation_basis(labels)
    lin = l_in.to_dense()
    lout = l_out.to_dense()
    a = q.T @ lin @ q
    b = q.T @ lout @ q
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    if regularization:
        b[np.diag_indices_from(b)] += regularization
    try:
        w, y = la.eigh(a, b, subset_by_index=[dim - k, dim - 1], driver="gvx")
        if len(w) != k:
            # bisection can drop pairs inside a tight eigenvalue cluster; solve fully instead
            w, y = la.eigh(a, b, driver="gvd")
            w, y = w[dim - k:], y[:, dim - k:]
    except la.LinAlgError as exc:
        raise SpectralError(f"generalized eigensolve failed: {exc}") from None

    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = fix_signs(q @ y[:, order])

    lam = np.clip(w, 0.0, None)
    # residual of the deflated problem: the part of L_in v in L_out's nullspace is
    # annihilated by pinv(L_out) and does not count
    lin_v = q @ (q.T @ (lin @ v))
    lout_v = lout @ v
    resid = np.linalg.norm(lin_v - lout_v * w, axis=0)
    scale = np.maximum(np.linalg.norm(lin_v, axis=0), np.abs(w) * np.linalg.norm(lout_v, axis=0))
    floor = np.finfo(float).eps * max(1.0, np.abs(lin).max(initial=0.0)) * n
    rel = resid / np.maximum(scale, floor)
    if check:
        if np.any(w < -1e-10):
            raise SpectralError(f"negative pencil eigenvalue {w.min():.3e}")
        if np.any(rel > RESIDUAL_TOL):
            m = int(np.argmax(rel))
            raise SpectralError(f"eigenpair {m} did not converge: relative residual {rel[m]:.3e}")
    return EigenSubspace(w, v, build_vk_from(v, lam), rel)


def build_vk_from(vectors: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))[None, :]


def build_vk(es: EigenSubspace) -> np.ndarray:
    """The N x k eigensubspace matrix [v_1 sqrt(lam_1), ..., v_k sqrt(lam_k)]."""
    return build_vk_from(es.eigenvectors, es.eigenvalues)
