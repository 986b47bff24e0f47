import numpy as np
import pytest

from miro.core import PointCloud
from miro.graph import (GraphConfig, build_graph, delaunay_edges,
                        laplacian_features, normalized_laplacian)
from oracles import brute_delaunay_edges, connected_components


def _edge_set(edges):
    return {(min(int(i), int(j)), max(int(i), int(j))) for i, j in edges}


def test_triangle_all_pairs():
    pts = np.array([[0, 0], [1, 0], [0.3, 1.0]])
    assert _edge_set(delaunay_edges(pts)) == {(0, 1), (0, 2), (1, 2)}


def test_unit_square_one_diagonal():
    pts = np.array([[0, 0], [1, 0], [1, 1.0001], [0, 1]])  # break cocircularity
    edges = _edge_set(delaunay_edges(pts))
    perimeter = {(0, 1), (1, 2), (2, 3), (0, 3)}
    assert perimeter <= edges
    diagonals = edges - perimeter
    assert len(diagonals) == 1 and diagonals <= {(0, 2), (1, 3)}


@pytest.mark.parametrize("seed", range(4))
def test_delaunay_matches_circumcircle_oracle(seed):
    pts = np.random.default_rng(seed).uniform(0, 100, size=(50, 2))
    assert _edge_set(delaunay_edges(pts)) == brute_delaunay_edges(pts)


def test_fewer_than_two_points():
    assert delaunay_edges(np.empty((0, 2))).shape == (0, 2)
    assert delaunay_edges(np.array([[1.0, 2.0]])).shape == (0, 2)


def test_degenerate_collinear_falls_back_to_knn():
    pts = np.column_stack([np.arange(6, dtype=float), np.zeros(6)])
    edges = _edge_set(delaunay_edges(pts))
    # k = 3 nearest neighbors along the line
    assert (0, 1) in edges and (2, 3) in edges
    assert all(abs(i - j) <= 3 for i, j in edges)


def test_two_points_knn():
    assert _edge_set(delaunay_edges(np.array([[0, 0], [1, 1.0]]))) == {(0, 1)}


def test_laplacian_two_node_path():
    feats = laplacian_features(np.array([[0, 1], [1, 0]]), 2, 1)
    assert np.allclose(feats, 1 / np.sqrt(2))
    lap = normalized_laplacian(np.array([[0, 1], [1, 0]]), 2)
    vals = np.linalg.eigvalsh(lap)
    assert np.allclose(vals, [0.0, 2.0])


def test_laplacian_null_space_equals_components():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(4, 40))
        m = int(rng.integers(1, 3 * n))
        edges = rng.integers(0, n, size=(m, 2))
        edges = edges[edges[:, 0] != edges[:, 1]]
        und = np.vstack([edges, edges[:, ::-1]])
        lap = normalized_laplacian(und, n)
        vals = np.linalg.eigvalsh(lap)
        n_zero = int((vals < 1e-9).sum())
        touched = np.unique(edges)
        n_isolated = n - touched.shape[0]
        # isolated nodes contribute eigenvalue 1 under the identity-row rule
        assert n_zero == connected_components(edges, n) - n_isolated


def test_triangle_graph_eigenvalues():
    # oracle: direct 3x3 eigensolve of I - A/2
    edges = np.array([[0, 1], [1, 2], [0, 2]])
    und = np.vstack([edges, edges[:, ::-1]])
    lap = normalized_laplacian(und, 3)
    direct = np.linalg.eigvalsh(np.eye(3) - (np.ones((3, 3)) - np.eye(3)) / 2.0)
    assert np.allclose(np.linalg.eigvalsh(lap), direct)
    assert np.allclose(np.linalg.eigvalsh(lap)[1:], [1.5, 1.5])


def test_isolated_node_identity_row():
    lap = normalized_laplacian(np.array([[0, 1], [1, 0]]), 3)
    assert np.allclose(lap[2], [0, 0, 1.0])


def test_features_padded_when_graph_small():
    feats = laplacian_features(np.array([[0, 1], [1, 0]]), 2, 5)
    assert feats.shape == (2, 5)
    assert np.allclose(feats[:, 1:], 0.0)


def test_build_graph_threshold_filter():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [500.0, 400.0]])
    g = build_graph(PointCloud(pts), GraphConfig(delta_mode="fixed", delta=50.0))
    assert _edge_set(g.edges) == {(0, 1)}


def test_build_graph_edge_features():
    pts = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 0.0]])
    g = build_graph(PointCloud(pts), GraphConfig(delta_mode="fixed", delta=100.0))
    # every undirected edge twice
    assert g.edges.shape[0] == 2 * len(_edge_set(g.edges))
    for (i, j), (dist, ux, uy) in zip(g.edges, g.edge_feats):
        vec = pts[j] - pts[i]
        assert abs(dist - np.linalg.norm(vec)) < 1e-9
        assert abs(np.hypot(ux, uy) - 1.0) < 1e-9
        assert np.allclose([ux, uy], vec / np.linalg.norm(vec), atol=1e-9)


def test_build_graph_column_norms_unit():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 300, size=(40, 2))
    g = build_graph(PointCloud(pts), GraphConfig())
    lap = normalized_laplacian(g.edges, 40)
    vals, vecs = np.linalg.eigh(lap)
    tol = 1e-9 * vals[-1]
    nontrivial = vecs[:, vals > tol][:, :5]
    # columns of the feature matrix are |eigenvectors| with unit norm
    assert np.allclose(np.linalg.norm(g.node_feats, axis=0)[: nontrivial.shape[1]], 1.0)
    assert np.allclose(g.node_feats[:, : nontrivial.shape[1]], np.abs(nontrivial))


def test_percentile_filter_bounds_mean_degree():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1000, size=(200, 2))
    und_full = delaunay_edges(pts)
    g = build_graph(PointCloud(pts), GraphConfig(delta_mode="percentile", percentile=95.0))
    full_degree = 2.0 * und_full.shape[0] / 200.0
    filtered_degree = g.edges.shape[0] / 200.0  # directed edges = 2m
    assert filtered_degree <= full_degree
    assert full_degree < 6.0  # Euler bound for planar triangulations


def test_duplicate_points_zero_direction():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0]])
    g = build_graph(PointCloud(pts), GraphConfig(delta_mode="fixed", delta=20.0))
    dup = [k for k, (i, j) in enumerate(g.edges)
           if {int(i), int(j)} == {0, 1}]
    assert dup, "duplicate pair should stay connected via the knn fallback"
    for k in dup:
        assert g.edge_feats[k, 0] == 0.0
        assert np.allclose(g.edge_feats[k, 1:], 0.0)


def test_eigenvalues_bounded_and_orthonormal():
    rng = np.random.default_rng(21)
    for _ in range(20):
        n = int(rng.integers(5, 60))
        pts = rng.uniform(0, 200, size=(n, 2))
        g = build_graph(PointCloud(pts), GraphConfig())
        lap = normalized_laplacian(g.edges, n)
        vals, vecs = np.linalg.eigh(lap)
        assert vals.min() > -1e-9 and vals.max() < 2 + 1e-9
        assert np.abs(vecs.T @ vecs - np.eye(n)).max() < 1e-8


def test_build_graph_deterministic():
    pts = np.random.default_rng(9).uniform(0, 100, size=(60, 2))
    g1 = build_graph(PointCloud(pts), GraphConfig())
    g2 = build_graph(PointCloud(pts), GraphConfig())
    assert np.array_equal(g1.node_feats, g2.node_feats)
    assert np.array_equal(g1.edges, g2.edges)
    assert np.array_equal(g1.edge_feats, g2.edge_feats)


def test_node_features_translation_rotation_invariant_fixed_delta():
    rng = np.random.default_rng(13)
    pts = rng.uniform(0, 100, size=(30, 2))
    cfg = GraphConfig(delta_mode="fixed", delta=40.0)
    g0 = build_graph(PointCloud(pts), cfg)
    g1 = build_graph(PointCloud(pts + [1000.0, -500.0]), cfg)
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    g2 = build_graph(PointCloud(pts @ rot.T), cfg)
    assert np.allclose(g0.node_feats, g1.node_feats, atol=1e-9)
    assert np.allclose(g0.node_feats, g2.node_feats, atol=1e-6)
    assert np.allclose(g0.edge_feats[:, 0], g2.edge_feats[:, 0], atol=1e-9)
    # direction vectors rotate with the cloud
    assert np.allclose(g2.edge_feats[:, 1:], g0.edge_feats[:, 1:] @ rot.T, atol=1e-9)
