"""Independent reference implementations used as test oracles.

These deliberately use brute-force formulations (pairwise scans, transitive
closure, permutation enumeration, circumcircle tests) so they stay
independent of the library's algorithms.
"""

from itertools import combinations, permutations

import numpy as np


def brute_delaunay_edges(points: np.ndarray) -> set[tuple[int, int]]:
    """Delaunay edges by the empty-circumcircle test over all triangles.

    Assumes points in general position (no 4 cocircular, no 3 collinear).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    edges: set[tuple[int, int]] = set()
    for i, j, k in combinations(range(n), 3):
        a, b, c = pts[i], pts[j], pts[k]
        d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            continue
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        center = np.array([ux, uy])
        r2 = ((a - center) ** 2).sum()
        d2 = ((pts - center) ** 2).sum(axis=1)
        mask = np.ones(n, dtype=bool)
        mask[[i, j, k]] = False
        if np.all(d2[mask] > r2 * (1 - 1e-12)):
            edges.update({(min(i, j), max(i, j)), (min(j, k), max(j, k)),
                          (min(i, k), max(i, k))})
    return edges


def brute_dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN by pairwise distances and transitive closure over core links.

    Border points join the earliest-created adjacent cluster, where clusters
    are created in ascending order of their smallest core-point index (the
    same deterministic rule the library documents).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    within = d2 <= eps * eps
    core = within.sum(axis=1) >= min_pts  # neighborhood includes the point
    labels = np.full(n, -1, dtype=np.int64)
    comp = np.full(n, -1, dtype=np.int64)
    cid = 0
    for i in range(n):
        if not core[i] or comp[i] != -1:
            continue
        stack = [i]
        comp[i] = cid
        while stack:
            a = stack.pop()
            for b in np.flatnonzero(within[a] & core):
                if comp[b] == -1:
                    comp[b] = cid
                    stack.append(b)
        cid += 1
    labels[core] = comp[core]
    for i in range(n):
        if core[i]:
            continue
        adjacent = comp[within[i] & core]
        if adjacent.size:
            labels[i] = adjacent.min()  # earliest-created cluster
    return labels


def brute_assignment(cost: np.ndarray) -> float:
    """Minimum assignment cost by enumerating all permutations (square)."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    best = np.inf
    for perm in permutations(range(n)):
        best = min(best, sum(cost[i, perm[i]] for i in range(n)))
    return best


def labels_equivalent(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two labelings agree up to renaming of non-noise ids
    (noise = -1 must match exactly)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    if not np.array_equal(a == -1, b == -1):
        return False
    fwd: dict[int, int] = {}
    rev: dict[int, int] = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if x == -1:
            continue
        if fwd.setdefault(x, y) != y or rev.setdefault(y, x) != x:
            return False
    return True


def finite_difference_grads(loss_fn, tensors: dict[str, np.ndarray],
                            step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar function of the tensors."""
    out = {}
    for name, arr in tensors.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + step
            lp = loss_fn()
            arr[ix] = orig - step
            lm = loss_fn()
            arr[ix] = orig
            g[ix] = (lp - lm) / (2.0 * step)
        out[name] = g
    return out


def connected_components(edges: np.ndarray, n: int) -> int:
    """Number of connected components (isolated nodes count as components)."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in np.asarray(edges).reshape(-1, 2):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(n)})
