"""Pure-numpy backend for the hot kernels.

Reference implementation: the compiled backend must match its output
exactly, including summation order and DBSCAN label numbering.
"""

import numpy as np

BACKEND = "python"


def segment_sum(values: np.ndarray, targets: np.ndarray, n_out: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n_out`` buckets given by ``targets``.

    Accumulation runs in ascending row order per bucket (bincount semantics),
    matching the compiled kernel bit for bit.
    """
    values = np.asarray(values, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    out = np.empty((n_out, values.shape[1]), dtype=np.float64)
    for d in range(values.shape[1]):
        out[:, d] = np.bincount(targets, weights=values[:, d], minlength=n_out)
    return out


def _build_grid(coords: np.ndarray, eps: float):
    """Uniform grid with cell size eps: dict (ix, iy) -> index array.

    Returns None when the extent spans too many cells for integer indices
    (pathologically small eps); callers fall back to a full scan.
    """
    mins = coords.min(axis=0)
    span = coords.max(axis=0) - mins
    if span[0] / eps >= 2.0 ** 31 or span[1] / eps >= 2.0 ** 31:
        return None, None
    cells = np.floor((coords - mins) / eps).astype(np.int64)
    grid: dict[tuple[int, int], list[int]] = {}
    for i, (cx, cy) in enumerate(cells):
        grid.setdefault((int(cx), int(cy)), []).append(i)
    return cells, {k: np.asarray(v, dtype=np.int64) for k, v in grid.items()}


def dbscan_labels(coords: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN labels: cluster ids 0,1,... in discovery order, noise = -1.

    The eps-neighborhood of a point includes the point itself. Each cluster
    is fully expanded before the outer scan resumes, so border points join
    the first cluster (in creation order) that reaches them.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = coords.shape[0]
    labels = np.full(n, -2, dtype=np.int64)  # -2 = unvisited
    if n == 0:
        return labels
    eps2 = eps * eps
    cells, grid = _build_grid(coords, eps)

    def region(i: int) -> np.ndarray:
        if grid is None:
            cand = np.arange(n)
        else:
            cx, cy = int(cells[i, 0]), int(cells[i, 1])
            cand = np.concatenate([grid[(cx + dx, cy + dy)]
                                   for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                                   if (cx + dx, cy + dy) in grid])
        diff = coords[cand] - coords[i]
        hits = cand[(diff * diff).sum(axis=1) <= eps2]
        hits.sort()
        return hits

    cid = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        neigh = region(i)
        if neigh.shape[0] < min_pts:
            labels[i] = -1
            continue
        labels[i] = cid
        queue = [j for j in neigh.tolist() if j != i]
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if labels[j] == -1:
                labels[j] = cid  # border point, previously marked noise
            if labels[j] != -2:
                continue
            labels[j] = cid
            jn = region(j)
            if jn.shape[0] >= min_pts:
                queue.extend(jn.tolist())
        cid += 1
    return labels
