"""Evaluation machinery: cluster pairing, detection and partition metrics.

Partition metrics treat noise as one additional cluster on each side; ARI_c
first removes points that are noise in the ground truth. Undefined values
(no matched clusters, zero variance, empty averages) are returned as None,
never as 0 or NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .core import NOISE, Partition, PointCloud, centroid

__all__ = [
    "MetricConfig",
    "PairingResult",
    "EvalReport",
    "hungarian",
    "pair_clusters",
    "detection_metrics",
    "partition_metrics",
    "PartitionMetrics",
    "iou_hulls",
    "classification_report",
    "ClassificationReport",
    "cohens_d",
    "exp_mean_fit",
    "evaluate_pair",
    "convex_hull",
    "polygon_area",
    "clip_convex",
]


@dataclass(frozen=True)
class MetricConfig:
    """xi: centroid pairing threshold in nm (use the cluster width if known)."""

    xi: float = 50.0

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be positive")


# ---------------------------------------------------------------------------
# assignment problem


def _solve_square(cost: np.ndarray):
    """Min-cost perfect matching on a square matrix with dual potentials.

    Shortest-augmenting-path method, O(n^3). Returns (match_row, u, v) where
    u, v satisfy u[i] + v[j] <= cost[i, j] with equality on matched pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        way = np.zeros(n + 1, dtype=np.int64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = int(p[j0])
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = ~used[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(used[1:], np.inf, minv[1:])
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][~used[1:]] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = int(way[j0])
            p[j0] = p[j1]
            j0 = j1
    match_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, n + 1):
        match_row[p[j] - 1] = j - 1
    return match_row, u[1:], v[1:]


def _lexicographic_refine(adm: np.ndarray, match_row: np.ndarray,
                          col_order: np.ndarray) -> np.ndarray:
    """Lexicographically smallest perfect matching inside the admissible graph.

    Rows are fixed in ascending order; candidate columns follow ``col_order``
    (real columns before padding). Every optimal assignment is a perfect
    matching of the admissible (zero-reduced-cost) graph, so the result stays
    optimal.
    """
    n = adm.shape[0]
    match_row = match_row.copy()
    match_col = np.full(n, -1, dtype=np.int64)
    for i, j in enumerate(match_row):
        match_col[j] = i
    rank = np.empty(n, dtype=np.int64)
    rank[col_order] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)

    def augment(row: int, banned: np.ndarray, visited: np.ndarray) -> bool:
        for c in col_order:
            if banned[c] or visited[c] or not adm[row, c]:
                continue
            visited[c] = True
            if match_col[c] == -1 or augment(int(match_col[c]), banned, visited):
                match_col[c] = row
                match_row[row] = c
                return True
        return False

    for i in range(n):
        cur = int(match_row[i])
        for c in col_order:
            if not adm[i, c] or fixed_col[c]:
                continue
            if rank[c] >= rank[cur]:
                break  # current match already the best remaining candidate
            i2 = int(match_col[c])
            # tentatively give column c to row i and reroute row i2
            match_row[i] = c
            match_col[c] = i
            match_col[cur] = -1
            banned = fixed_col.copy()
            banned[c] = True
            if augment(i2, banned, np.zeros(n, dtype=bool)):
                cur = c
                break
            match_row[i] = cur
            match_col[cur] = i
            match_col[c] = i2
        fixed_col[cur] = True
    return match_row


def hungarian(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost assignment of a rectangular cost matrix.

    Returns (pairs, total_cost) with pairs sorted by row; exactly
    min(n_rows, n_cols) pairs are produced. Among cost ties the
    lexicographically smallest assignment is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return [], 0.0
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    r, c = cost.shape
    n = max(r, c)
    padded = np.zeros((n, n))
    padded[:r, :c] = cost
    match_row, u, v = _solve_square(padded)
    tol = 1e-9 * (1.0 + float(np.abs(cost).max()))
    adm = padded - u[:, None] - v[None, :] <= tol
    col_order = np.concatenate([np.arange(c), np.arange(c, n)]).astype(np.int64)
    match_row = _lexicographic_refine(adm, match_row, col_order)
    pairs = [(i, int(j)) for i, j in enumerate(match_row) if i < r and j < c]
    total = float(sum(cost[i, j] for i, j in pairs))
    return pairs, total


@dataclass(frozen=True)
class PairingResult:
    """Hungarian centroid pairing of ground-truth and predicted clusters."""

    matches: list[tuple[int, int, float]]  # (gt id, pred id, centroid distance)
    fp: list[int]                          # unmatched predicted cluster ids
    fn: list[int]                          # unmatched ground-truth cluster ids


def _cluster_centroids(part: Partition, coords: np.ndarray):
    ids = part.cluster_ids
    cents = np.stack([centroid(coords[part.members(int(c))]) for c in ids]) \
        if ids.shape[0] else np.empty((0, 2))
    return ids, cents


def pair_clusters(gt: Partition, pred: Partition, points,
                  cfg: Optional[MetricConfig] = None) -> PairingResult:
    """Match clusters by centroid distance; matches beyond xi are discarded."""
    cfg = cfg or MetricConfig()
    coords = points.coords if isinstance(points, PointCloud) else \
        np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(gt) != len(pred) or len(gt) != coords.shape[0]:
        raise ValueError("partitions and points must have equal length")
    gt_ids, gt_c = _cluster_centroids(gt, coords)
    pr_ids, pr_c = _cluster_centroids(pred, coords)
    if gt_ids.shape[0] == 0 or pr_ids.shape[0] == 0:
        return PairingResult([], [int(i) for i in pr_ids], [int(i) for i in gt_ids])
    dist = np.linalg.norm(gt_c[:, None, :] - pr_c[None, :, :], axis=2)
    forbidden = 1e6 * (1.0 + float(dist.max()))
    cost = np.where(dist <= cfg.xi, dist, forbidden)
    pairs, _ = hungarian(cost)
    matches = [(int(gt_ids[i]), int(pr_ids[j]), float(dist[i, j]))
               for i, j in pairs if dist[i, j] <= cfg.xi]
    used_gt = {m[0] for m in matches}
    used_pr = {m[1] for m in matches}
    fn = [int(i) for i in gt_ids if int(i) not in used_gt]
    fp = [int(j) for j in pr_ids if int(j) not in used_pr]
    return PairingResult(matches=matches, fp=fp, fn=fn)


def detection_metrics(pairing: PairingResult, gt: Partition, pred: Partition,
                      points=None) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """(JI_c, RMSRE_N, RMSE_xy); the latter two are None when TP = 0."""
    tp = len(pairing.matches)
    fp = len(pairing.fp)
    fn = len(pairing.fn)
    denom = tp + fp + fn
    ji = tp / denom if denom else 1.0
    if tp == 0:
        return ji, None, None
    rel = []
    sq = []
    for gt_id, pr_id, d in pairing.matches:
        n_gt = gt.members(gt_id).shape[0]
        n_pr = pred.members(pr_id).shape[0]
        rel.append(((n_pr - n_gt) / n_gt) ** 2)
        sq.append(d * d)
    return ji, float(np.sqrt(np.mean(rel))), float(np.sqrt(np.mean(sq)))


# ---------------------------------------------------------------------------
# partition similarity


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Counts matrix over the distinct labels of each side (noise included)."""
    av, ai = np.unique(a, return_inverse=True)
    bv, bi = np.unique(b, return_inverse=True)
    M = np.zeros((av.shape[0], bv.shape[0]), dtype=np.int64)
    np.add.at(M, (ai, bi), 1)
    return M


def _comb2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    return x * (x - 1.0) / 2.0


def _ari_from_contingency(M: np.ndarray) -> float:
    n = float(M.sum())
    if n < 2:
        return 1.0
    sij = _comb2(M.ravel()).sum()
    sa = _comb2(M.sum(axis=1)).sum()
    sb = _comb2(M.sum(axis=0)).sum()
    nn = n * (n - 1.0) / 2.0
    expected = sa * sb / nn
    maximum = 0.5 * (sa + sb)
    if maximum == expected:
        return 1.0 if sij == expected else 0.0
    return float((sij - expected) / (maximum - expected))


def _ari_dagger_from_contingency(M: np.ndarray) -> Optional[float]:
    """Unweighted-average variant: per-cluster pair-agreement indices enter
    with equal weight instead of the quadratic cluster-size weights."""
    n = float(M.sum())
    if n < 2:
        return 1.0
    nn = n * (n - 1.0) / 2.0
    a = M.sum(axis=1)
    b = M.sum(axis=0)
    p_u = _comb2(a).sum() / nn
    p_v = _comb2(b).sum() / nn
    rows = np.flatnonzero(a >= 2)
    cols = np.flatnonzero(b >= 2)
    if rows.shape[0] == 0 or cols.shape[0] == 0:
        return None
    s_u = float(np.mean([_comb2(M[i, :]).sum() / _comb2(a[i:i + 1])[0] for i in rows]))
    s_v = float(np.mean([_comb2(M[:, j]).sum() / _comb2(b[j:j + 1])[0] for j in cols]))
    if p_v == 1.0 or p_u == 1.0:
        return 1.0 if s_u == 1.0 and s_v == 1.0 else None
    aw_u = (s_u - p_v) / (1.0 - p_v)
    aw_v = (s_v - p_u) / (1.0 - p_u)
    if aw_u + aw_v == 0:
        return 0.0
    return float(2.0 * aw_u * aw_v / (aw_u + aw_v))


def _entropy(counts: np.ndarray, n: float) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _expected_mi(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """Expected mutual information under the permutation model."""
    emi = 0.0
    lg_n = gammaln(n + 1)
    log_n = np.log(n)
    for ai in a:
        ai = int(ai)
        for bj in b:
            bj = int(bj)
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            term = nij / n * (np.log(nij) + log_n - np.log(float(ai) * bj))
            lp = (gammaln(ai + 1) + gammaln(bj + 1)
                  + gammaln(n - ai + 1) + gammaln(n - bj + 1) - lg_n
                  - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                  - gammaln(n - ai - bj + nij + 1))
            emi += float((term * np.exp(lp)).sum())
    return emi


def _mutual_info(M: np.ndarray, n: float) -> float:
    a = M.sum(axis=1)
    b = M.sum(axis=0)
    nz = M > 0
    vals = M[nz].astype(np.float64)
    outer = np.outer(a, b)[nz].astype(np.float64)
    return float((vals / n * (np.log(vals * n) - np.log(outer))).sum())


def _ami_from_contingency(M: np.ndarray) -> float:
    """AMI with the arithmetic-mean normalization."""
    n = int(M.sum())
    if M.shape[0] == 1 and M.shape[1] == 1:
        return 1.0
    mi = _mutual_info(M, float(n))
    emi = _expected_mi(M.sum(axis=1), M.sum(axis=0), n)
    h_u = _entropy(M.sum(axis=1), float(n))
    h_v = _entropy(M.sum(axis=0), float(n))
    normalizer = 0.5 * (h_u + h_v)
    denominator = normalizer - emi
    eps = np.finfo(np.float64).eps
    if denominator < 0:
        denominator = min(denominator, -eps)
    else:
        denominator = max(denominator, eps)
    return float((mi - emi) / denominator)


@dataclass(frozen=True)
class PartitionMetrics:
    ari: float
    ari_dagger: Optional[float]
    ami: float
    ari_c: Optional[float]


def partition_metrics(gt: Partition, pred: Partition) -> PartitionMetrics:
    """ARI, ARI-dagger, AMI and ARI over ground-truth-clustered points only."""
    ga, pa = gt.labels, pred.labels
    if ga.shape[0] != pa.shape[0]:
        raise ValueError("partitions must have equal length")
    M = _contingency(ga, pa)
    ari = _ari_from_contingency(M)
    dagger = _ari_dagger_from_contingency(M)
    ami = _ami_from_contingency(M)
    keep = ga != NOISE
    ari_c = None
    if keep.any():
        ari_c = _ari_from_contingency(_contingency(ga[keep], pa[keep]))
    return PartitionMetrics(ari=ari, ari_dagger=dagger, ami=ami, ari_c=ari_c)


# ---------------------------------------------------------------------------
# convex hull IoU


def _cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counterclockwise, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if pts.shape[0] <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(iterable):
        out: list[np.ndarray] = []
        for p in iterable:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon (absolute value)."""
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a convex CCW polygon."""
    output = [p for p in subject]
    m = clipper.shape[0]
    for k in range(m):
        a = clipper[k]
        b = clipper[(k + 1) % m]
        edge = b - a
        if not output:
            break
        inp = output
        output = []
        prev = inp[-1]
        prev_in = _cross2(edge, prev - a) >= 0
        for cur in inp:
            cur_in = _cross2(edge, cur - a) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = _cross2(edge, d)
                if denom != 0:
                    t = _cross2(edge, a - prev) / denom
                    output.append(prev + t * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output).reshape(-1, 2)


def _hull_iou(pts_a: np.ndarray, pts_b: np.ndarray) -> float:
    hull_a = convex_hull(pts_a)
    hull_b = convex_hull(pts_b)
    area_a = polygon_area(hull_a)
    area_b = polygon_area(hull_b)
    if area_a == 0.0 and area_b == 0.0:
        d = np.linalg.norm(centroid(pts_a) - centroid(pts_b))
        return 1.0 if d <= 1e-9 else 0.0
    if area_a == 0.0 or area_b == 0.0:
        return 0.0
    inter = polygon_area(clip_convex(hull_a, hull_b))
    union = area_a + area_b - inter
    return float(inter / union) if union > 0 else 0.0


def iou_hulls(pairing: PairingResult, gt: Partition, pred: Partition, points) -> float:
    """Mean convex-hull IoU over all clusters (matched pairs counted once,
    unmatched clusters contribute zero)."""
    coords = points.coords if isinstance(points, PointCloud) else \
        np.asarray(points, dtype=np.float64).reshape(-1, 2)
    total = len(pairing.matches) + len(pairing.fp) + len(pairing.fn)
    if total == 0:
        return 1.0
    acc = 0.0
    for gt_id, pr_id, _ in pairing.matches:
        acc += _hull_iou(coords[gt.members(gt_id)], coords[pred.members(pr_id)])
    return acc / total


# ---------------------------------------------------------------------------
# classification and sample statistics


@dataclass(frozen=True)
class ClassificationReport:
    classes: np.ndarray        # sorted distinct class ids
    counts: np.ndarray         # (C, C) confusion counts, rows = true class
    row_normalized: np.ndarray
    f1: np.ndarray             # per-class F1 in `classes` order


def classification_report(gt_classes: Sequence[int],
                          pred_classes: Sequence[int]) -> ClassificationReport:
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    pred_classes = np.asarray(pred_classes, dtype=np.int64)
    if gt_classes.shape != pred_classes.shape:
        raise ValueError("class lists must have equal length")
    classes = np.unique(np.concatenate([gt_classes, pred_classes]))
    index = {int(c): i for i, c in enumerate(classes)}
    counts = np.zeros((classes.shape[0], classes.shape[0]), dtype=np.int64)
    for t, p in zip(gt_classes, pred_classes):
        counts[index[int(t)], index[int(p)]] += 1
    rows = counts.sum(axis=1, keepdims=True).astype(np.float64)
    row_norm = np.divide(counts, np.where(rows > 0, rows, 1.0))
    f1 = np.zeros(classes.shape[0])
    for i in range(classes.shape[0]):
        tp = counts[i, i]
        prec_d = counts[:, i].sum()
        rec_d = counts[i, :].sum()
        prec = tp / prec_d if prec_d else 0.0
        rec = tp / rec_d if rec_d else 0.0
        f1[i] = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return ClassificationReport(classes=classes, counts=counts,
                                row_normalized=row_norm, f1=f1)


def cohens_d(a, b) -> Optional[float]:
    """Effect size (mean(a) - mean(b)) / pooled SD; None if SD is undefined."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    if a.size + b.size < 3:
        return None
    var = ((a.size - 1) * a.var(ddof=1) if a.size > 1 else 0.0) + \
          ((b.size - 1) * b.var(ddof=1) if b.size > 1 else 0.0)
    pooled = np.sqrt(var / (a.size + b.size - 2))
    if pooled == 0:
        return None
    return float((a.mean() - b.mean()) / pooled)


def exp_mean_fit(sample, min_count: float = 0.0) -> float:
    """Maximum-likelihood exponential mean above a configured minimum count."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        raise ValueError("empty sample")
    mean = float(sample.mean()) - min_count
    if mean <= 0:
        raise ValueError("sample mean does not exceed the minimum count")
    return mean


# ---------------------------------------------------------------------------
# one-call evaluation


@dataclass(frozen=True)
class EvalReport:
    """All metrics for one (ground truth, prediction) pair."""

    ji_c: float
    rmsre_n: Optional[float]
    rmse_xy: Optional[float]
    iou: float
    ari: float
    ari_dagger: Optional[float]
    ami: float
    ari_c: Optional[float]
    n_clusters_gt: int
    n_clusters_pred: int


def evaluate_pair(points, gt: Partition, pred: Partition,
                  cfg: Optional[MetricConfig] = None) -> EvalReport:
    cfg = cfg or MetricConfig()
    pairing = pair_clusters(gt, pred, points, cfg)
    ji, rmsre, rmse = detection_metrics(pairing, gt, pred)
    iou = iou_hulls(pairing, gt, pred, points)
    pm = partition_metrics(gt, pred)
    return EvalReport(ji_c=ji, rmsre_n=rmsre, rmse_xy=rmse, iou=iou,
                      ari=pm.ari, ari_dagger=pm.ari_dagger, ami=pm.ami,
                      ari_c=pm.ari_c, n_clusters_gt=gt.n_clusters,
                      n_clusters_pred=pred.n_clusters)
