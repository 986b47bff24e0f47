"""Core data types for localization point clouds and cluster assignments.

Coordinates are 64-bit floats in nanometers throughout. Cluster labels are
integers with ``NOISE = -1`` reserved for non-clustered points; non-noise
ids are non-negative but need not be contiguous. All types are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

NOISE = -1

__all__ = [
    "NOISE",
    "Rect",
    "Localization",
    "PointCloud",
    "Partition",
    "LabeledCloud",
    "CloudFormatError",
    "centroid",
    "read_cloud",
    "write_cloud",
]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned bounding rectangle in nm."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.xmin, self.ymin, self.xmax, self.ymax)):
            raise ValueError("rectangle bounds must be finite")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ValueError("rectangle has negative extent")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.xmin, other.xmin),
            min(self.ymin, other.ymin),
            max(self.xmax, other.xmax),
            max(self.ymax, other.ymax),
        )


@dataclass(frozen=True)
class Localization:
    """One molecular localization: position in nm plus optional frame index."""

    x: float
    y: float
    frame: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("localization coordinates must be finite")
        if self.frame is not None and self.frame < 0:
            raise ValueError("frame index must be non-negative")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class PointCloud:
    """An ordered set of 2D localizations with a bounding extent.

    Point order is stable: every per-point annotation elsewhere (labels,
    class ids) indexes into this order. The extent is grown on construction
    so that every point lies inside it.
    """

    __slots__ = ("_coords", "_frames", "_extent")

    def __init__(self, coords, frames=None, extent: Optional[Rect] = None):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must have shape (n, 2)")
        if coords.size and not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if frames is not None:
            frames = np.asarray(frames, dtype=np.int64)
            if frames.shape != (coords.shape[0],):
                raise ValueError("frames length must match point count")
            if frames.size and frames.min() < 0:
                raise ValueError("frame indices must be non-negative")
            frames = _readonly(frames)
        self._coords = _readonly(coords)
        self._frames = frames
        if coords.shape[0]:
            lo = coords.min(axis=0)
            hi = coords.max(axis=0)
            fit = Rect(lo[0], lo[1], hi[0], hi[1])
            extent = fit if extent is None else extent.union(fit)
        elif extent is None:
            extent = Rect(0.0, 0.0, 0.0, 0.0)
        self._extent = extent

    @property
    def coords(self) -> np.ndarray:
        """(n, 2) read-only float64 array of positions in nm."""
        return self._coords

    @property
    def frames(self) -> Optional[np.ndarray]:
        return self._frames

    @property
    def extent(self) -> Rect:
        return self._extent

    def __len__(self) -> int:
        return self._coords.shape[0]

    def __getitem__(self, i: int) -> Localization:
        x, y = self._coords[i]
        frame = int(self._frames[i]) if self._frames is not None else None
        return Localization(float(x), float(y), frame)

    def __iter__(self) -> Iterator[Localization]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if not np.array_equal(self._coords, other._coords):
            return False
        if (self._frames is None) != (other._frames is None):
            return False
        if self._frames is not None and not np.array_equal(self._frames, other._frames):
            return False
        return True


class Partition:
    """Per-point integer cluster labels; ``NOISE`` (-1) marks non-clustered points."""

    __slots__ = ("_labels",)

    def __init__(self, labels):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and labels.min() < NOISE:
            raise ValueError("labels must be >= -1 (NOISE)")
        self._labels = _readonly(labels)

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def __len__(self) -> int:
        return self._labels.shape[0]

    @property
    def noise_mask(self) -> np.ndarray:
        return self._labels == NOISE

    @property
    def cluster_ids(self) -> np.ndarray:
        """Sorted array of distinct non-noise labels in use."""
        ids = np.unique(self._labels)
        return ids[ids != NOISE]

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_ids.shape[0])

    def members(self, cluster_id: int) -> np.ndarray:
        """Indices of points carrying ``cluster_id``."""
        return np.flatnonzero(self._labels == cluster_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self._labels, other._labels)


def _check_refinement(fine: np.ndarray, coarse: np.ndarray) -> None:
    for cid in np.unique(fine):
        if cid == NOISE:
            continue
        parents = np.unique(coarse[fine == cid])
        if parents.shape[0] != 1:
            raise ValueError(
                f"fine cluster {cid} spans {parents.shape[0]} coarse clusters; "
                "fine partitions must refine coarse ones"
            )


@dataclass(frozen=True)
class LabeledCloud:
    """A point cloud with ground-truth annotations.

    ``truth`` is the (fine-scale) cluster partition, ``shape_class`` the
    per-point structure class (0 = background), and ``coarse_truth`` the
    optional coarse-scale partition for multiscale datasets.
    """

    cloud: PointCloud
    truth: Optional[Partition] = None
    shape_class: Optional[np.ndarray] = None
    coarse_truth: Optional[Partition] = None

    def __post_init__(self):
        n = len(self.cloud)
        if self.truth is not None and len(self.truth) != n:
            raise ValueError("truth length must match point count")
        if self.shape_class is not None:
            sc = np.asarray(self.shape_class, dtype=np.int64)
            if sc.shape != (n,):
                raise ValueError("shape_class length must match point count")
            if sc.size and sc.min() < 0:
                raise ValueError("class ids must be non-negative")
            if self.truth is not None and np.any(sc[self.truth.noise_mask] != 0):
                raise ValueError("noise points must have background class 0")
            object.__setattr__(self, "shape_class", _readonly(sc))
        if self.coarse_truth is not None:
            if len(self.coarse_truth) != n:
                raise ValueError("coarse_truth length must match point count")
            if self.truth is not None:
                _check_refinement(self.truth.labels, self.coarse_truth.labels)

    def __len__(self) -> int:
        return len(self.cloud)


def centroid(points) -> np.ndarray:
    """Arithmetic mean of a non-empty set of 2D positions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty point set")
    pts = pts.reshape(-1, 2)
    return pts.mean(axis=0)


class CloudFormatError(ValueError):
    """Raised for malformed localization CSV files."""


# CSV schema: header x_nm,y_nm[,frame,cluster_id,class_id,coarse_id],
# optional columns in this order; -1 encodes NOISE in label columns.
_OPTIONAL_COLUMNS = ("frame", "cluster_id", "class_id", "coarse_id")


def write_cloud(path, labeled: LabeledCloud) -> None:
    """Write a labeled cloud as CSV; coordinates round-trip bit-exactly."""
    cloud = labeled.cloud
    cols = ["x_nm", "y_nm"]
    pulls = []
    if cloud.frames is not None:
        cols.append("frame")
        pulls.append(lambda i: str(int(cloud.frames[i])))
    if labeled.truth is not None:
        cols.append("cluster_id")
        pulls.append(lambda i: str(int(labeled.truth.labels[i])))
    if labeled.shape_class is not None:
        cols.append("class_id")
        pulls.append(lambda i: str(int(labeled.shape_class[i])))
    if labeled.coarse_truth is not None:
        cols.append("coarse_id")
        pulls.append(lambda i: str(int(labeled.coarse_truth.labels[i])))
    coords = cloud.coords
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(cloud)):
            row = [repr(float(coords[i, 0])), repr(float(coords[i, 1]))]
            row.extend(pull(i) for pull in pulls)
            fh.write(",".join(row) + "\n")


def read_cloud(path) -> LabeledCloud:
    """Read a localization CSV written per the schema of :func:`write_cloud`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CloudFormatError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[:2] != ["x_nm", "y_nm"]:
        raise CloudFormatError(f"{path}: line 1: header must start with x_nm,y_nm")
    extra = header[2:]
    for col in extra:
        if col not in _OPTIONAL_COLUMNS:
            raise CloudFormatError(f"{path}: line 1: unknown column {col!r}")
    order = [_OPTIONAL_COLUMNS.index(c) for c in extra]
    if order != sorted(order) or len(set(order)) != len(order):
        raise CloudFormatError(f"{path}: line 1: optional columns must appear in order "
                               f"{','.join(_OPTIONAL_COLUMNS)}")
    ncols = len(header)
    xs, ys = [], []
    opt: dict[str, list] = {c: [] for c in extra}
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw == "":
            continue
        parts = raw.split(",")
        if len(parts) != ncols:
            raise CloudFormatError(
                f"{path}: line {lineno}: expected {ncols} columns, found {len(parts)}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
            for col, val in zip(extra, parts[2:]):
                opt[col].append(int(val))
        except ValueError as exc:
            raise CloudFormatError(f"{path}: line {lineno}: {exc}") from None
    coords = np.column_stack([xs, ys]) if xs else np.empty((0, 2))
    frames = np.asarray(opt["frame"], dtype=np.int64) if "frame" in opt else None
    cloud = PointCloud(coords, frames=frames)
    truth = Partition(opt["cluster_id"]) if "cluster_id" in opt else None
    shape_class = np.asarray(opt["class_id"], dtype=np.int64) if "class_id" in opt else None
    coarse = Partition(opt["coarse_id"]) if "coarse_id" in opt else None
    try:
        return LabeledCloud(cloud, truth=truth, shape_class=shape_class, coarse_truth=coarse)
    except ValueError as exc:
        raise CloudFormatError(f"{path}: {exc}") from None
