"""Density clustering of (collapsed) point sets and the end-to-end pipeline.

DBSCAN follows the textbook semantics: a core point has at least ``min_pts``
neighbors within ``eps`` (the neighborhood includes the point itself);
clusters are maximal density-connected sets; border points join the first
core cluster that reaches them in deterministic index order. Neighborhood
queries run on a uniform grid with cell size ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import dbscan_labels
from .core import NOISE, Partition, PointCloud, centroid
from .graph import GraphConfig, build_graph, normalized_view, scaled_config
from .model import ModelParams, StepOutputs, collapse, forward

__all__ = ["DbscanConfig", "PipelineResult", "dbscan", "run_pipeline",
           "nn_cluster_distances"]


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def dbscan(points, cfg: DbscanConfig) -> Partition:
    """Cluster 2D points; returns a Partition with noise = -1."""
    coords = points.coords if isinstance(points, PointCloud) else \
        np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return Partition(dbscan_labels(coords, cfg.eps, cfg.min_pts))


def _enforce_hierarchy(fine: np.ndarray, coarse: np.ndarray) -> np.ndarray:
    """Split fine clusters along coarse boundaries; pieces in coarse noise
    are demoted to noise. Idempotent; returns relabeled fine labels."""
    out = np.full_like(fine, NOISE)
    next_id = 0
    for cid in _ids_in_first_appearance_order(fine):
        idx = np.flatnonzero(fine == cid)
        for parent in _ids_in_first_appearance_order(coarse[idx], include_noise=True):
            piece = idx[coarse[idx] == parent]
            if parent == NOISE:
                continue
            out[piece] = next_id
            next_id += 1
    return out


def _ids_in_first_appearance_order(labels: np.ndarray, include_noise: bool = False):
    seen = set()
    order = []
    for v in labels:
        v = int(v)
        if v == NOISE and not include_noise:
            continue
        if v not in seen:
            seen.add(v)
            order.append(v)
    return order


@dataclass(frozen=True)
class PipelineResult:
    """Clustering of one cloud; partitions index the original coordinates."""

    fine: Partition
    coarse: Optional[Partition] = None
    cluster_class: Optional[dict[int, int]] = None
    collapsed_fine: Optional[np.ndarray] = None
    collapsed_coarse: Optional[np.ndarray] = None


def _majority_class(logits: np.ndarray, members: np.ndarray) -> int:
    votes = np.argmax(logits[members], axis=1)
    counts = np.bincount(votes)
    return int(np.argmax(counts))  # argmax breaks ties toward the lower id


def run_pipeline(cloud: PointCloud, params: ModelParams,
                 graph_cfg: Optional[GraphConfig] = None,
                 dbscan_fine: Optional[DbscanConfig] = None,
                 dbscan_coarse: Optional[DbscanConfig] = None,
                 class_mode: bool = False) -> PipelineResult:
    """Graph -> recurrent forward -> collapse -> DBSCAN, at one or two scales.

    Fine-scale clustering uses the displacements of step ``k_star - 1`` for
    multiscale models and the final step otherwise; coarse-scale clustering
    always uses the final step. Labels refer to the original coordinates.
    """
    cfg = params.config
    if dbscan_fine is None:
        raise ValueError("dbscan_fine configuration is required")
    if dbscan_coarse is not None and cfg.k_star is None:
        raise ValueError("coarse clustering requires a multiscale model (k_star set)")
    if class_mode and cfg.n_classes == 0:
        raise ValueError("class_mode requires a model trained with n_classes > 0")

    # the model runs in the zero-mean, extent-normalized frame it was
    # trained in; displacements are de-normalized before collapse
    norm_cloud, _, scale = normalized_view(cloud)
    base_cfg = graph_cfg or GraphConfig()
    graph = build_graph(norm_cloud, scaled_config(base_cfg, scale))
    raw: StepOutputs = forward(graph, params)
    outputs = StepOutputs(displacements=raw.displacements * scale,
                          class_logits=raw.class_logits)
    fine_step = (cfg.k_star - 1) if cfg.k_star is not None else cfg.n_steps - 1

    collapsed_fine = collapse(cloud, outputs, fine_step)
    fine = dbscan(collapsed_fine, dbscan_fine).labels.copy()

    coarse_part = None
    collapsed_coarse = None
    if dbscan_coarse is not None:
        collapsed_coarse = collapse(cloud, outputs, cfg.n_steps - 1)
        coarse = dbscan(collapsed_coarse, dbscan_coarse).labels
        fine = _enforce_hierarchy(fine, coarse)
        coarse_part = Partition(coarse)

    cluster_class = None
    if class_mode:
        logits = outputs.class_logits[cfg.n_steps - 1]
        cluster_class = {}
        for cid in np.unique(fine):
            if cid == NOISE:
                continue
            members = np.flatnonzero(fine == cid)
            cls = _majority_class(logits, members)
            if cls == 0:
                fine[members] = NOISE  # background-majority clusters are noise
            else:
                cluster_class[int(cid)] = cls

    return PipelineResult(fine=Partition(fine), coarse=coarse_part,
                          cluster_class=cluster_class,
                          collapsed_fine=collapsed_fine,
                          collapsed_coarse=collapsed_coarse)


def nn_cluster_distances(partition: Partition, points) -> np.ndarray:
    """For each cluster centroid, the distance to its nearest other centroid.

    Ordered by ascending cluster id; empty for fewer than two clusters.
    """
    coords = points.coords if isinstance(points, PointCloud) else \
        np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ids = partition.cluster_ids
    if ids.shape[0] < 2:
        return np.empty(0)
    cents = np.stack([centroid(coords[partition.members(int(c))]) for c in ids])
    d2 = ((cents[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1))
