import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spadegnn.graph import Laplacian, build_graph, connected_components, laplacian
from spadegnn.knn import KnnConfig, knn_graph
from spadegnn.spectral import SpectralError, build_vk, fix_signs, pencil_topk

from conftest import random_connected_graph, random_graph
from oracles import dense_pencil_oracle, principal_angles_max


def scaled(L, c):
    return Laplacian(L.matrix * c, L.degree * c)


def pencil_pair(n, rng):
    g_in = random_connected_graph(n, 0.15, rng)
    g_out = knn_graph(rng.normal(size=(n, 3)), KnnConfig(k=4))
    return g_in, g_out


def test_self_pencil_is_identity(rng):
    g = random_connected_graph(25, 0.2, rng)
    L = laplacian(g)
    es = pencil_topk(L, L, 3, g_out=g)
    assert np.allclose(es.eigenvalues, 1.0, atol=1e-8)


def test_doubled_input_gives_two(rng):
    g = random_connected_graph(20, 0.3, rng)
    es = pencil_topk(scaled(laplacian(g), 2.0), laplacian(g), 4, g_out=g)
    assert np.allclose(es.eigenvalues, 2.0, atol=1e-8)


def test_matches_dense_oracle_30(rng):
    g_in, g_out = pencil_pair(30, rng)
    L_in, L_out = laplacian(g_in), laplacian(g_out)
    es = pencil_topk(L_in, L_out, 5, g_out=g_out)
    w, v = dense_pencil_oracle(L_in, L_out, 5, g_out)
    assert np.allclose(es.eigenvalues, w, rtol=1e-8, atol=0)
    assert principal_angles_max(es.eigenvectors, v) <= 1e-6


def test_invariants(rng):
    g_in, g_out = pencil_pair(40, rng)
    L_in, L_out = laplacian(g_in), laplacian(g_out)
    es = pencil_topk(L_in, L_out, 6, g_out=g_out)
    lin, lout = L_in.to_dense(), L_out.to_dense()
    v = es.eigenvectors
    assert np.all(np.diff(es.eigenvalues) <= 0)
    assert np.all(es.eigenvalues >= -1e-10)
    gram = v.T @ lout @ v
    assert np.allclose(gram, np.eye(6), atol=1e-8)
    for m in range(6):
        r = lin @ v[:, m] - es.eigenvalues[m] * (lout @ v[:, m])
        assert np.linalg.norm(r) <= 1e-6 * np.linalg.norm(lin @ v[:, m])
    assert np.array_equal(es.v_k_matrix, v * np.sqrt(es.eigenvalues))


def test_sign_convention(rng):
    g_in, g_out = pencil_pair(30, rng)
    v = pencil_topk(laplacian(g_in), laplacian(g_out), 4, g_out=g_out).eigenvectors
    piv = np.argmax(np.abs(v), axis=0)
    assert np.all(v[piv, np.arange(4)] > 0)


def test_fix_signs_tie_goes_to_lowest_index():
    v = fix_signs(np.array([[-1.0], [1.0]]))
    assert v[:, 0].tolist() == [1.0, -1.0]


def test_p2_vk():
    g = build_graph(2, [(0, 1, 1)])
    L = laplacian(g)
    es = pencil_topk(L, L, 1, g_out=g)
    assert es.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(build_vk(es)[:, 0], [0.5, -0.5], atol=1e-12)


def test_vk_zero_eigenvalue_column():
    from spadegnn.spectral import EigenSubspace

    es = EigenSubspace(np.array([4.0, 0.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), None, np.zeros(2))
    vk = build_vk(es)
    assert np.array_equal(vk[:, 1], [0.0, 0.0])
    assert np.array_equal(vk[:, 0], [2.0, 6.0])


def test_vk_column_norms(rng):
    g_in, g_out = pencil_pair(30, rng)
    es = pencil_topk(laplacian(g_in), laplacian(g_out), 5, g_out=g_out)
    vk = build_vk(es)
    assert np.allclose((vk**2).sum(axis=0), es.eigenvalues * (es.eigenvectors**2).sum(axis=0))


def test_k_too_large():
    g_out = build_graph(4, [(0, 1, 1), (2, 3, 1)])  # two components -> dimension 2
    g_in = build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    pencil_topk(laplacian(g_in), laplacian(g_out), 2, g_out=g_out)
    with pytest.raises(SpectralError, match="dimension 2"):
        pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out)


def test_disconnected_output_matches_oracle(rng):
    # G_in edges cross the G_out components; deflation must still be exact
    pts = np.vstack([rng.normal(size=(15, 2)), rng.normal(size=(15, 2)) + 50])
    g_out = knn_graph(pts, KnnConfig(k=3))
    assert connected_components(g_out).max() >= 1
    g_in = random_connected_graph(30, 0.1, rng)
    L_in, L_out = laplacian(g_in), laplacian(g_out)
    es = pencil_topk(L_in, L_out, 4, g_out=g_out)
    w, v = dense_pencil_oracle(L_in, L_out, 4, g_out)
    assert np.allclose(es.eigenvalues, w, rtol=1e-8)
    assert principal_angles_max(es.eigenvectors, v) <= 1e-6


def test_g_out_inferred_from_laplacian(rng):
    g_in, g_out = pencil_pair(25, rng)
    a = pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out)
    b = pencil_topk(laplacian(g_in), laplacian(g_out), 3)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_courant_fischer_bound(rng):
    g_in, g_out = pencil_pair(35, rng)
    L_in, L_out = laplacian(g_in), laplacian(g_out)
    lam1 = pencil_topk(L_in, L_out, 1, g_out=g_out).eigenvalues[0]
    labels = connected_components(g_out)
    best = 0.0
    for _ in range(50):
        x = rng.normal(size=35)
        for c in np.unique(labels):
            x[labels == c] -= x[labels == c].mean()
        best = max(best, L_in.quadratic_form(x) / L_out.quadratic_form(x))
    assert lam1 >= best - 1e-6


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_scaling_covariance(rng, c):
    g_in, g_out = pencil_pair(30, rng)
    L_in, L_out = laplacian(g_in), laplacian(g_out)
    base = pencil_topk(L_in, L_out, 4, g_out=g_out)
    sc = pencil_topk(scaled(L_in, c), L_out, 4, g_out=g_out)
    assert np.allclose(sc.eigenvalues, c * base.eigenvalues, rtol=1e-9)
    assert np.allclose(sc.eigenvectors, base.eigenvectors, atol=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    r = np.random.default_rng(seed)
    g_in, g_out = pencil_pair(20, r)
    perm = r.permutation(20)
    a = pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out)
    pg_in, pg_out = g_in.permute(perm), g_out.permute(perm)
    b = pencil_topk(laplacian(pg_in), laplacian(pg_out), 3, g_out=pg_out)
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-8)
    moved = np.empty_like(a.eigenvectors)
    moved[perm] = a.eigenvectors
    assert principal_angles_max(moved, b.eigenvectors) <= 1e-6


def test_regularization_stays_close(rng):
    g_in, g_out = pencil_pair(30, rng)
    a = pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out)
    b = pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out, regularization=1e-8)
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-6)


def test_size_mismatch():
    with pytest.raises(SpectralError):
        pencil_topk(laplacian(build_graph(3, [(0, 1, 1)])), laplacian(build_graph(2, [(0, 1, 1)])), 1)


def test_isolated_input_nodes_ok(rng):
    g_in = random_graph(20, 0.05, rng)  # likely several isolated nodes
    g_out = knn_graph(rng.normal(size=(20, 2)), KnnConfig(k=3))
    es = pencil_topk(laplacian(g_in), laplacian(g_out), 3, g_out=g_out)
    w, _ = dense_pencil_oracle(laplacian(g_in), laplacian(g_out), 3, g_out)
    assert np.allclose(es.eigenvalues, w, rtol=1e-8, atol=1e-12)


def test_self_pencil_never_drops_pairs():
    # all eigenvalues coincide here; the subset solver can return too few pairs
    rng = np.random.default_rng(505)
    for _ in range(20):
        n, k = int(rng.integers(10, 61)), int(rng.integers(1, 7))
        g = random_connected_graph(n, float(rng.uniform(0.05, 0.3)), rng)
        es = pencil_topk(laplacian(g), laplacian(g), k, g_out=g)
        assert es.k == k
        assert np.allclose(es.eigenvalues, 1.0, atol=1e-8)
        random_connected_graph(n, float(rng.uniform(0.05, 0.3)), rng)  # keep the stream aligned
