"""Graph representation of a point cloud.

Edges come from a Delaunay triangulation filtered by a distance threshold;
node features are absolute entries of the smallest non-trivial eigenvectors
of the normalized graph Laplacian; edge features are the Euclidean distance
and the unit direction vector. All functions are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay, QhullError

from .core import PointCloud, Rect

__all__ = ["GraphConfig", "LocGraph", "delaunay_edges", "laplacian_features",
           "build_graph", "normalized_view", "scaled_config"]

# eigenvalues below this fraction of the largest one count as the null space
ZERO_EIG_RTOL = 1e-9
# dense eigendecomposition up to this node count, iterative solver above
DENSE_EIG_LIMIT = 2048


@dataclass(frozen=True)
class GraphConfig:
    """Edge threshold and node-feature settings.

    ``delta_mode`` is either ``"fixed"`` (use ``delta`` nm) or
    ``"percentile"`` (threshold at the ``percentile``-th percentile of this
    cloud's Delaunay edge lengths).
    """

    delta: float = 0.0
    n_eigs: int = 5
    delta_mode: str = "percentile"
    percentile: float = 95.0

    def __post_init__(self):
        if self.delta_mode not in ("fixed", "percentile"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")
        if self.delta_mode == "fixed" and not self.delta > 0:
            raise ValueError("fixed delta must be positive")
        if self.delta_mode == "percentile" and not 0 < self.percentile < 100:
            raise ValueError("percentile must be in (0, 100)")
        if self.n_eigs < 1:
            raise ValueError("n_eigs must be >= 1")


@dataclass(frozen=True)
class LocGraph:
    """Graph form of a point cloud, the model input.

    ``edges`` holds every surviving undirected Delaunay edge twice, once per
    direction; ``edge_feats`` rows are ``[distance_nm, dir_x, dir_y]`` with
    the direction a unit vector from the source to the target node (the zero
    vector for exactly coincident points).
    """

    coords: np.ndarray      # (n, 2) float64, nm
    node_feats: np.ndarray  # (n, n_eigs) float64, >= 0
    edges: np.ndarray       # (2m, 2) int64 ordered pairs (src, dst)
    edge_feats: np.ndarray  # (2m, 3) float64

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def scale(self) -> float:
        """Coordinate span (bounding-box diagonal, nm); 1.0 for a degenerate
        cloud. Displacement decoding and loss normalization both use this, so
        the model learns in span-relative units regardless of the extent."""
        if self.coords.shape[0] == 0:
            return 1.0
        span = self.coords.max(axis=0) - self.coords.min(axis=0)
        diag = float(np.hypot(span[0], span[1]))
        return diag if diag > 0 else 1.0


def _knn_edges(points: np.ndarray, k: int) -> np.ndarray:
    """Symmetric k-nearest-neighbor edge set; fallback for degenerate input."""
    n = points.shape[0]
    if n < 2 or k < 1:
        return np.empty((0, 2), dtype=np.int64)
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    pairs = set()
    for i in range(n):
        # ties broken toward lower index for determinism
        nearest = np.lexsort((np.arange(n), d2[i]))[:k]
        for j in nearest:
            pairs.add((min(i, int(j)), max(i, int(j))))
    out = np.asarray(sorted(pairs), dtype=np.int64)
    return out.reshape(-1, 2)


def delaunay_edges(points) -> np.ndarray:
    """Undirected Delaunay edge set as an (m, 2) int64 array with i < j.

    Fewer than two points give an empty set. Degenerate geometry (collinear
    input, fewer than three points, coincident points that break the
    triangulation) falls back to a k-nearest-neighbor graph, k = min(3, n-1).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    if n >= 3:
        try:
            tri = Delaunay(points)
            s = tri.simplices
            pairs = np.vstack([s[:, [0, 1]], s[:, [1, 2]], s[:, [0, 2]]])
            pairs.sort(axis=1)
            edges = np.unique(pairs, axis=0).astype(np.int64)
            if edges.shape[0]:
                return edges
        except QhullError:
            pass
    return _knn_edges(points, min(3, n - 1))


def _count_zero_eigs(edges: np.ndarray, n: int) -> int:
    """Zero-eigenvalue multiplicity: connected components that contain an edge.

    Isolated nodes take an identity row in the normalized Laplacian and so
    contribute an eigenvalue of 1, not 0.
    """
    parent = np.arange(n)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[ri] = rj
    roots = {find(int(i)) for e in edges for i in e}
    return len(roots)


def normalized_laplacian(edges: np.ndarray, n: int, sparse: bool = False):
    """I - D^(-1/2) A D^(-1/2); isolated nodes get an identity row."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    ones = np.ones(edges.shape[0])
    adj = sp.coo_matrix((ones, (edges[:, 0], edges[:, 1])), shape=(n, n))
    adj = adj.tocsr()
    adj.sum_duplicates()
    adj.data[:] = 1.0  # both directions of each undirected edge collapse to 1
    deg = np.asarray(adj.sum(axis=1)).ravel()
    dinv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    dhalf = sp.diags(dinv)
    lap = sp.eye(n) - dhalf @ adj @ dhalf
    return lap.tocsr() if sparse else lap.toarray()


def laplacian_features(edges, n_points: int, n_eigs: int) -> np.ndarray:
    """Absolute entries of the smallest non-trivial Laplacian eigenvectors.

    The edge set must be symmetric (both directions present, or pass the
    undirected set — duplicates are collapsed). Columns are zero-padded when
    the graph has fewer than ``n_eigs`` non-trivial eigenvectors.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = n_points
    if n < 1:
        raise ValueError("n_points must be >= 1")
    if n <= DENSE_EIG_LIMIT:
        lap = normalized_laplacian(edges, n, sparse=False)
        vals, vecs = np.linalg.eigh(lap)
    else:
        lap = normalized_laplacian(edges, n, sparse=True)
        n_zero = _count_zero_eigs(edges, n)
        k = min(n_zero + n_eigs, n - 1)
        # shift-invert about a point left of the spectrum: deterministic
        # given the fixed start vector
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals, vecs = spla.eigsh(lap.tocsc(), k=k, sigma=-0.05, which="LM", v0=v0)
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    lam_max = max(float(vals[-1]) if vals.size else 0.0, 1e-300)
    tol = ZERO_EIG_RTOL * lam_max
    keep = np.flatnonzero(vals > tol)
    take = keep[:n_eigs]
    feats = np.zeros((n, n_eigs))
    feats[:, : take.shape[0]] = np.abs(vecs[:, take])
    return feats


def normalized_view(cloud: PointCloud) -> tuple[PointCloud, np.ndarray, float]:
    """Zero-mean, unit-extent copy of a cloud: (normalized, center, scale).

    The scale is the extent diagonal (1.0 for a degenerate cloud). Training
    and the inference pipeline both work in this frame so the model sees the
    same feature magnitudes regardless of the field-of-view size; predicted
    displacements are multiplied back by the scale before collapse.
    """
    scale = cloud.extent.diagonal
    if scale <= 0:
        scale = 1.0
    coords = cloud.coords
    center = coords.mean(axis=0) if coords.shape[0] else np.zeros(2)
    ext = cloud.extent
    norm_extent = Rect((ext.xmin - center[0]) / scale, (ext.ymin - center[1]) / scale,
                       (ext.xmax - center[0]) / scale, (ext.ymax - center[1]) / scale)
    return PointCloud((coords - center) / scale, extent=norm_extent), center, scale


def scaled_config(cfg: GraphConfig, scale: float) -> GraphConfig:
    """Graph config for a cloud whose coordinates were divided by ``scale``
    (a fixed delta is expressed in original nm and must shrink with them)."""
    if cfg.delta_mode == "fixed":
        return replace(cfg, delta=cfg.delta / scale)
    return cfg


def resolve_delta(cfg: GraphConfig, edge_lengths: np.ndarray) -> float:
    if cfg.delta_mode == "fixed":
        return cfg.delta
    if edge_lengths.size == 0:
        return 0.0
    return float(np.percentile(edge_lengths, cfg.percentile))


def build_graph(cloud, cfg: Optional[GraphConfig] = None) -> LocGraph:
    """Build the model input graph from a cloud (or raw (n, 2) coordinates)."""
    if cfg is None:
        cfg = GraphConfig()
    coords = cloud.coords if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = coords.shape[0]
    if n == 0:
        raise ValueError("cannot build a graph from an empty cloud")
    und = delaunay_edges(coords)
    if und.shape[0]:
        lengths = np.linalg.norm(coords[und[:, 1]] - coords[und[:, 0]], axis=1)
        delta = resolve_delta(cfg, lengths)
        und = und[lengths <= delta]
    directed = np.vstack([und, und[:, ::-1]]) if und.shape[0] else np.empty((0, 2), dtype=np.int64)
    vec = coords[directed[:, 1]] - coords[directed[:, 0]] if directed.shape[0] else np.empty((0, 2))
    dist = np.linalg.norm(vec, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(dist[:, None] > 0, vec / np.where(dist[:, None] > 0, dist[:, None], 1.0), 0.0)
    edge_feats = np.column_stack([dist, direction]) if directed.shape[0] else np.empty((0, 3))
    node_feats = laplacian_features(directed, n, cfg.n_eigs)
    return LocGraph(coords=np.asarray(coords, dtype=np.float64), node_feats=node_feats,
                    edges=directed.astype(np.int64), edge_feats=edge_feats)
