"""Synthetic labeled point clouds: benchmark-style scenarios, blinking,
few-shot augmentation, and the two-cluster resolution test.

Generation is deterministic given (spec, seed). Clustered molecules are
emitted group by group and cluster by cluster, followed by background
molecules, so ground-truth labels are reproducible arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import NOISE, LabeledCloud, Partition, PointCloud, Rect, centroid

__all__ = [
    "Gaussian", "Ellipse", "Arc", "Npc",
    "Fixed", "UniformInt", "Geometric",
    "ClusterGroup", "Background", "ScenarioSpec", "BlinkSpec",
    "AugmentSpec", "SeedCluster",
    "generate", "apply_blinking", "augment_dataset", "gen_pair_test",
    "make_preset", "preset_names", "PresetInstance",
    "spec_to_dict", "spec_from_dict",
]

_TAU = 2.0 * math.pi


# --------------------------------------------------------------------------
# cluster shapes

@dataclass(frozen=True)
class Gaussian:
    """Isotropic 2D normal cluster; sigma drawn per cluster from
    [sigma, sigma_max] when sigma_max is set."""

    sigma: float
    sigma_max: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sigma_max is not None and self.sigma_max < self.sigma:
            raise ValueError("sigma_max must be >= sigma")


@dataclass(frozen=True)
class Ellipse:
    """Anisotropic 2D normal with the given aspect ratio (major:minor) and a
    uniformly random orientation per cluster."""

    sigma_major: float
    aspect: float = 3.0

    def __post_init__(self):
        if not self.sigma_major > 0 or not self.aspect > 0:
            raise ValueError("sigma_major and aspect must be positive")


@dataclass(frozen=True)
class Arc:
    """Points at uniform angles over arc_span on a circle with normal radial
    noise; arc_span = pi gives C-shapes, 2*pi closed rings."""

    radius: float
    radial_sigma: float
    arc_span: float

    def __post_init__(self):
        if not (self.radius > 0 and self.radial_sigma > 0 and self.arc_span > 0):
            raise ValueError("arc parameters must be positive")


@dataclass(frozen=True)
class Npc:
    """Eightfold ring of corner clusters with a common center vertex.

    Each corner is an isosceles triangle: apex at the ring center, height
    2 * corner_radius along the corner axis, base subtending 2*pi/corners at
    the center. Localizations spread around the triangle centroid with an
    angle-dependent normal sigma of (centroid-to-perimeter distance) divided
    by spread_divisor. The per-corner localization count comes from the
    group's molecule distribution.
    """

    corner_radius: float = 50.0
    corners: int = 8
    spread_divisor: float = 1.8

    def __post_init__(self):
        if not self.corner_radius > 0 or not self.spread_divisor > 0:
            raise ValueError("corner_radius and spread_divisor must be positive")
        if self.corners < 2:
            raise ValueError("corners must be >= 2")


Shape = Union[Gaussian, Ellipse, Arc, Npc]


# --------------------------------------------------------------------------
# count distributions

@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("count must be >= 0")

    def sample(self, rng: np.random.Generator) -> int:
        return self.n


@dataclass(frozen=True)
class UniformInt:
    lo: int
    hi: int  # inclusive

    def __post_init__(self):
        if self.lo < 0 or self.hi < self.lo:
            raise ValueError("need 0 <= lo <= hi")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Geometric:
    """Geometric law on {1, 2, ...} with the given mean."""

    mean: float

    def __post_init__(self):
        if not self.mean >= 1:
            raise ValueError("geometric mean must be >= 1")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.geometric(1.0 / self.mean))


CountDist = Union[Fixed, UniformInt, Geometric]


@dataclass(frozen=True)
class ClusterGroup:
    count: int
    molecules: CountDist
    shape: Shape
    class_id: int = 1

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("cluster count must be >= 0")
        if self.class_id < 1:
            raise ValueError("class_id must be >= 1 (0 is background)")


@dataclass(frozen=True)
class Background:
    """Either a fraction of the total molecule count or an absolute count."""

    fraction: Optional[float] = None
    count: Optional[int] = None

    def __post_init__(self):
        if (self.fraction is None) == (self.count is None):
            raise ValueError("set exactly one of fraction or count")
        if self.fraction is not None and not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be >= 0")

    def resolve(self, n_clustered: int) -> int:
        if self.count is not None:
            return self.count
        f = self.fraction
        if f == 1.0:
            if n_clustered:
                raise ValueError("background fraction 1.0 with clustered molecules")
            return 0
        # |m - f * (n_clustered + m)| <= 1 by rounding f*n/(1-f)
        return int(round(f * n_clustered / (1.0 - f)))


@dataclass(frozen=True)
class ScenarioSpec:
    extent: Rect
    cluster_groups: tuple[ClusterGroup, ...]
    background: Background
    min_cluster_separation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.min_cluster_separation < 0:
            raise ValueError("min_cluster_separation must be >= 0")
        object.__setattr__(self, "cluster_groups", tuple(self.cluster_groups))


@dataclass(frozen=True)
class BlinkSpec:
    """Blinking model: per-molecule localization count is geometric on
    {1, 2, ...} with mean mean_blinks; offsets are iid 2D normal with the
    localization precision as sigma."""

    mean_blinks: float = 4.5
    localization_precision: float = 10.0

    def __post_init__(self):
        if not self.mean_blinks >= 1:
            raise ValueError("mean_blinks must be >= 1")
        if self.localization_precision < 0:
            raise ValueError("localization_precision must be >= 0")


PLACEMENT_RETRY_BUDGET = 10_000


def _place_centers(rng, extent: Rect, n: int, min_sep: float) -> np.ndarray:
    centers = np.empty((n, 2))
    placed = 0
    min_sep2 = min_sep * min_sep
    while placed < n:
        tries = 0
        while True:
            cand = np.array([rng.uniform(extent.xmin, extent.xmax),
                             rng.uniform(extent.ymin, extent.ymax)])
            if min_sep == 0.0 or placed == 0:
                break
            d2 = ((centers[:placed] - cand) ** 2).sum(axis=1)
            if d2.min() >= min_sep2:
                break
            tries += 1
            if tries >= PLACEMENT_RETRY_BUDGET:
                raise RuntimeError("cannot place clusters at requested separation")
        centers[placed] = cand
        placed += 1
    return centers


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _sample_gaussian(rng, shape: Gaussian, center, n: int) -> np.ndarray:
    sig = shape.sigma if shape.sigma_max is None else rng.uniform(shape.sigma, shape.sigma_max)
    return center + rng.normal(0.0, sig, size=(n, 2))


def _sample_ellipse(rng, shape: Ellipse, center, n: int) -> np.ndarray:
    theta = rng.uniform(0.0, _TAU)
    sig = np.array([shape.sigma_major, shape.sigma_major / shape.aspect])
    pts = rng.normal(size=(n, 2)) * sig
    return center + pts @ _rot(theta).T


def _sample_arc(rng, shape: Arc, center, n: int) -> np.ndarray:
    theta0 = rng.uniform(0.0, _TAU)
    ang = theta0 + rng.uniform(0.0, shape.arc_span, size=n)
    rad = shape.radius + rng.normal(0.0, shape.radial_sigma, size=n)
    return center + rad[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])


def _ray_to_triangle_boundary(origin: np.ndarray, direction: np.ndarray,
                              verts: np.ndarray) -> float:
    """Distance from an interior point to the triangle boundary along a ray."""
    best = math.inf
    for k in range(3):
        p = verts[k]
        e = verts[(k + 1) % 3] - p
        denom = direction[0] * e[1] - direction[1] * e[0]
        if denom == 0.0:
            continue
        w = p - origin
        t = (w[0] * e[1] - w[1] * e[0]) / denom
        if t <= 0.0:
            continue
        hit = origin + t * direction
        s = float(np.dot(hit - p, e) / np.dot(e, e))
        if -1e-9 <= s <= 1 + 1e-9:
            best = min(best, t)
    return best


def _sample_npc_corner(rng, shape: Npc, n: int) -> np.ndarray:
    """Corner localizations in the local frame (apex at origin, axis +x)."""
    h = 2.0 * shape.corner_radius
    half = math.tan(math.pi / shape.corners) * h
    verts = np.array([[0.0, 0.0], [h, half], [h, -half]])
    g = verts.mean(axis=0)
    pts = np.empty((n, 2))
    for i in range(n):
        theta = rng.uniform(0.0, _TAU)
        d = np.array([math.cos(theta), math.sin(theta)])
        reach = _ray_to_triangle_boundary(g, d, verts)
        sigma = reach / shape.spread_divisor
        rho = rng.normal(0.0, sigma)
        pts[i] = g + rho * d
    return pts


def generate(spec: ScenarioSpec, seed=None) -> LabeledCloud:
    """Generate one labeled cloud of molecules (one localization each).

    Cluster centers are uniform in the extent subject to the minimum
    separation (rejection sampling). For NPC shapes the fine partition marks
    corners and the coarse partition whole rings.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n_clusters = sum(g.count for g in spec.cluster_groups)
    centers = _place_centers(rng, spec.extent, n_clusters, spec.min_cluster_separation)

    has_npc = any(isinstance(g.shape, Npc) for g in spec.cluster_groups)
    chunks: list[np.ndarray] = []
    fine: list[int] = []
    coarse: list[int] = []
    classes: list[int] = []
    fine_id = 0
    coarse_id = 0
    ci = 0
    for group in spec.cluster_groups:
        for _ in range(group.count):
            center = centers[ci]
            ci += 1
            if isinstance(group.shape, Npc):
                orient = rng.uniform(0.0, _TAU)
                ring_id = coarse_id
                coarse_id += 1
                for corner in range(group.shape.corners):
                    n_mol = group.molecules.sample(rng)
                    if n_mol == 0:
                        continue
                    local = _sample_npc_corner(rng, group.shape, n_mol)
                    phi = orient + _TAU * corner / group.shape.corners
                    pts = center + local @ _rot(phi).T
                    chunks.append(pts)
                    fine.extend([fine_id] * n_mol)
                    coarse.extend([ring_id] * n_mol)
                    classes.extend([group.class_id] * n_mol)
                    fine_id += 1
            else:
                n_mol = group.molecules.sample(rng)
                if n_mol == 0:
                    continue
                if isinstance(group.shape, Gaussian):
                    pts = _sample_gaussian(rng, group.shape, center, n_mol)
                elif isinstance(group.shape, Ellipse):
                    pts = _sample_ellipse(rng, group.shape, center, n_mol)
                else:
                    pts = _sample_arc(rng, group.shape, center, n_mol)
                chunks.append(pts)
                fine.extend([fine_id] * n_mol)
                coarse.extend([coarse_id] * n_mol)
                classes.extend([group.class_id] * n_mol)
                fine_id += 1
                coarse_id += 1

    n_clustered = sum(len(c) for c in chunks)
    n_bg = spec.background.resolve(n_clustered)
    if n_bg:
        bg = np.column_stack([
            rng.uniform(spec.extent.xmin, spec.extent.xmax, size=n_bg),
            rng.uniform(spec.extent.ymin, spec.extent.ymax, size=n_bg),
        ])
        chunks.append(bg)
        fine.extend([NOISE] * n_bg)
        coarse.extend([NOISE] * n_bg)
        classes.extend([0] * n_bg)

    coords = np.vstack(chunks) if chunks else np.empty((0, 2))
    cloud = PointCloud(coords, extent=spec.extent)
    return LabeledCloud(
        cloud=cloud,
        truth=Partition(np.asarray(fine, dtype=np.int64)),
        shape_class=np.asarray(classes, dtype=np.int64),
        coarse_truth=Partition(np.asarray(coarse, dtype=np.int64)) if has_npc else None,
    )


def apply_blinking(labeled: LabeledCloud, spec: BlinkSpec, seed=0,
                   include_background: bool = True) -> LabeledCloud:
    """Replace each molecule by >= 1 localizations with normal offsets.

    With include_background=False, background molecules are kept as single
    unperturbed localizations.
    """
    rng = np.random.default_rng(seed)
    n = len(labeled)
    coords = labeled.cloud.coords
    p = 1.0 / spec.mean_blinks
    counts = rng.geometric(p, size=n) if spec.mean_blinks > 1 else np.ones(n, dtype=np.int64)
    if not include_background and labeled.truth is not None:
        counts = np.where(labeled.truth.noise_mask, 1, counts)
    total = int(counts.sum())
    offsets = rng.normal(0.0, spec.localization_precision, size=(total, 2)) \
        if spec.localization_precision > 0 else np.zeros((total, 2))
    if not include_background and labeled.truth is not None:
        noise_rows = np.repeat(labeled.truth.noise_mask, counts)
        offsets[noise_rows] = 0.0
    idx = np.repeat(np.arange(n), counts)
    new_coords = coords[idx] + offsets
    cloud = PointCloud(new_coords, extent=labeled.cloud.extent)
    return LabeledCloud(
        cloud=cloud,
        truth=Partition(labeled.truth.labels[idx]) if labeled.truth is not None else None,
        shape_class=labeled.shape_class[idx] if labeled.shape_class is not None else None,
        coarse_truth=Partition(labeled.coarse_truth.labels[idx])
        if labeled.coarse_truth is not None else None,
    )


# --------------------------------------------------------------------------
# few-shot augmentation

@dataclass(frozen=True)
class SeedCluster:
    points: np.ndarray
    class_id: int = 1


@dataclass(frozen=True)
class AugmentSpec:
    rotations: bool = True
    reflections: bool = True
    dropout_prob: float = 0.0
    addition_prob: float = 0.0
    jitter_sigma: float = 0.0
    placements: tuple[int, int] = (1, 8)   # inclusive copies per cloud
    background: Background = Background(fraction=0.5)
    background_mode: str = "uniform"       # "uniform" | "resample"
    background_source: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob < 1.0 or not 0.0 <= self.addition_prob < 1.0:
            raise ValueError("probabilities must be in [0, 1)")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        lo, hi = self.placements
        if lo < 1 or hi < lo:
            raise ValueError("placements range must satisfy 1 <= lo <= hi")
        if self.background_mode not in ("uniform", "resample"):
            raise ValueError(f"unknown background_mode {self.background_mode!r}")
        if self.background_mode == "resample" and self.background_source is None:
            raise ValueError("resample background mode needs background_source points")


def _augment_copy(rng, seed_cluster: SeedCluster, spec: AugmentSpec,
                  extent: Rect) -> np.ndarray:
    pts = np.asarray(seed_cluster.points, dtype=np.float64)
    pts = pts - centroid(pts)
    if spec.rotations:
        pts = pts @ _rot(rng.uniform(0.0, _TAU)).T
    if spec.reflections and rng.random() < 0.5:
        pts = pts * np.array([-1.0, 1.0])
    if spec.dropout_prob > 0:
        pts = pts[rng.random(pts.shape[0]) >= spec.dropout_prob]
    if spec.addition_prob > 0 and pts.shape[0]:
        dup = pts[rng.random(pts.shape[0]) < spec.addition_prob]
        if dup.shape[0]:
            dup = dup + rng.normal(0.0, spec.jitter_sigma, size=dup.shape)
            pts = np.vstack([pts, dup])
    if spec.jitter_sigma > 0 and pts.shape[0]:
        pts = pts + rng.normal(0.0, spec.jitter_sigma, size=pts.shape)
    target = np.array([rng.uniform(extent.xmin, extent.xmax),
                       rng.uniform(extent.ymin, extent.ymax)])
    return pts + target


def augment_dataset(seed_clusters: Sequence[SeedCluster], spec: AugmentSpec,
                    n_clouds: int, extent: Rect, seed=0) -> list[LabeledCloud]:
    """Build training clouds from a few representative clusters."""
    seed_clusters = list(seed_clusters)
    if not seed_clusters:
        raise ValueError("at least one seed cluster is required")
    for sc in seed_clusters:
        if np.asarray(sc.points).reshape(-1, 2).shape[0] == 0:
            raise ValueError("seed clusters must be non-empty")
    clouds = []
    for ci in range(n_clouds):
        rng = np.random.default_rng([seed, ci])
        n_place = int(rng.integers(spec.placements[0], spec.placements[1] + 1))
        chunks: list[np.ndarray] = []
        labels: list[int] = []
        classes: list[int] = []
        cid = 0
        for _ in range(n_place):
            sc = seed_clusters[int(rng.integers(len(seed_clusters)))]
            pts = _augment_copy(rng, sc, spec, extent)
            if pts.shape[0] == 0:
                continue
            chunks.append(pts)
            labels.extend([cid] * pts.shape[0])
            classes.extend([sc.class_id] * pts.shape[0])
            cid += 1
        n_clustered = sum(len(c) for c in chunks)
        n_bg = spec.background.resolve(n_clustered)
        if n_bg:
            if spec.background_mode == "uniform":
                bg = np.column_stack([
                    rng.uniform(extent.xmin, extent.xmax, size=n_bg),
                    rng.uniform(extent.ymin, extent.ymax, size=n_bg),
                ])
            else:
                source = np.asarray(spec.background_source, dtype=np.float64).reshape(-1, 2)
                bg = source[rng.integers(source.shape[0], size=n_bg)]
                if spec.jitter_sigma > 0:
                    bg = bg + rng.normal(0.0, spec.jitter_sigma, size=bg.shape)
            chunks.append(bg)
            labels.extend([NOISE] * n_bg)
            classes.extend([0] * n_bg)
        coords = np.vstack(chunks) if chunks else np.empty((0, 2))
        clouds.append(LabeledCloud(
            cloud=PointCloud(coords, extent=extent),
            truth=Partition(np.asarray(labels, dtype=np.int64)),
            shape_class=np.asarray(classes, dtype=np.int64),
        ))
    return clouds


def gen_pair_test(sigma: float = 25.0, separation: float = 0.0,
                  mean_count: int = 90, seed=0) -> LabeledCloud:
    """Two Gaussian clusters of width sigma at the given center distance.

    Counts are geometric with the given mean (minimum 1); truth labels are
    0 and 1.
    """
    if not sigma > 0 or separation < 0:
        raise ValueError("need sigma > 0 and separation >= 0")
    rng = np.random.default_rng(seed)
    n0 = int(rng.geometric(1.0 / mean_count))
    n1 = int(rng.geometric(1.0 / mean_count))
    c0 = np.array([-separation / 2.0, 0.0])
    c1 = np.array([+separation / 2.0, 0.0])
    p0 = c0 + rng.normal(0.0, sigma, size=(n0, 2))
    p1 = c1 + rng.normal(0.0, sigma, size=(n1, 2))
    margin = 4.0 * sigma
    extent = Rect(c0[0] - margin, -margin, c1[0] + margin, margin)
    cloud = PointCloud(np.vstack([p0, p1]), extent=extent)
    return LabeledCloud(cloud=cloud,
                        truth=Partition(np.asarray([0] * n0 + [1] * n1, dtype=np.int64)))


# --------------------------------------------------------------------------
# named presets


@dataclass(frozen=True)
class PresetInstance:
    spec: ScenarioSpec
    blink: Optional[BlinkSpec] = None


def _square(side: float) -> Rect:
    return Rect(0.0, 0.0, side, side)


def _preset_scenario5(rng) -> ScenarioSpec:
    return ScenarioSpec(_square(2000.0),
                        (ClusterGroup(100, Fixed(15), Gaussian(25.0)),),
                        Background(fraction=0.5))


def _preset_scenario6(rng) -> ScenarioSpec:
    return ScenarioSpec(_square(2000.0),
                        (ClusterGroup(20, Fixed(50), Ellipse(75.0, 3.0)),),
                        Background(fraction=0.5))


def _preset_scenario8(rng) -> ScenarioSpec:
    return ScenarioSpec(_square(2000.0),
                        (ClusterGroup(10, Fixed(5), Gaussian(25.0)),
                         ClusterGroup(10, Fixed(15), Gaussian(25.0))),
                        Background(fraction=0.5))


def _preset_scenario9(rng) -> ScenarioSpec:
    return ScenarioSpec(_square(2000.0),
                        (ClusterGroup(10, Fixed(15), Gaussian(25.0)),
                         ClusterGroup(10, Fixed(135), Gaussian(75.0))),
                        Background(fraction=0.5))


def _preset_c_shape(rng) -> ScenarioSpec:
    n = int(rng.integers(30, 61))
    return ScenarioSpec(_square(6400.0),
                        (ClusterGroup(n, UniformInt(30, 60), Arc(250.0, 50.0, math.pi)),),
                        Background(fraction=0.06))


def _preset_ring(rng) -> ScenarioSpec:
    n = int(rng.integers(60, 71))
    return ScenarioSpec(_square(6400.0),
                        (ClusterGroup(n, UniformInt(60, 80), Arc(250.0, 50.0, _TAU)),),
                        Background(fraction=0.07))


def _preset_npc(rng) -> ScenarioSpec:
    n = int(rng.integers(5, 10))
    return ScenarioSpec(_square(1250.0),
                        (ClusterGroup(n, UniformInt(0, 80), Npc(50.0, 8, 1.8)),),
                        Background(fraction=0.03))


def _preset_nanocluster(rng) -> ScenarioSpec:
    return ScenarioSpec(_square(10000.0),
                        (ClusterGroup(60, Geometric(25.0), Gaussian(25.0, 40.0)),),
                        Background(fraction=0.04))


_PRESETS = {
    "scenario5": _preset_scenario5,
    "scenario6": _preset_scenario6,
    "scenario8": _preset_scenario8,
    "scenario9": _preset_scenario9,
    "c_shape": _preset_c_shape,
    "ring": _preset_ring,
    "npc": _preset_npc,
    "nanocluster": _preset_nanocluster,
}

DEFAULT_BLINK = BlinkSpec(mean_blinks=4.5, localization_precision=10.0)


def preset_names() -> list[str]:
    names = sorted(_PRESETS)
    return names + [f"{n}_blinking" for n in sorted(_PRESETS)]


def make_preset(name: str, seed=0) -> PresetInstance:
    """Resolve a preset name (optionally suffixed `_blinking`) to a concrete
    spec; per-cloud random cluster counts are drawn from the seed."""
    base = name
    blink = None
    if name.endswith("_blinking"):
        base = name[: -len("_blinking")]
        blink = DEFAULT_BLINK
    if base not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    rng = np.random.default_rng(seed)
    spec = _PRESETS[base](rng)
    return PresetInstance(spec=replace(spec, seed=_as_int_seed(seed)), blink=blink)


def _as_int_seed(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return abs(hash(tuple(np.asarray(seed).ravel().tolist()))) % (2 ** 63)


def generate_preset_cloud(name: str, index: int, base_seed: int = 0) -> tuple[LabeledCloud, ScenarioSpec]:
    """One deterministic cloud of a preset: per-index derived seed."""
    inst = make_preset(name, seed=[base_seed, index])
    labeled = generate(inst.spec, seed=[base_seed, index])
    if inst.blink is not None:
        labeled = apply_blinking(labeled, inst.blink, seed=[base_seed, index, 1])
    return labeled, inst.spec


# --------------------------------------------------------------------------
# JSON form of a scenario spec (CLI configuration files)

_SHAPE_TAGS = {"gaussian": Gaussian, "ellipse": Ellipse, "arc": Arc, "npc": Npc}
_COUNT_TAGS = {"fixed": Fixed, "uniform": UniformInt, "geometric": Geometric}


def spec_to_dict(spec: ScenarioSpec) -> dict:
    def shape_d(s: Shape) -> dict:
        tag = next(k for k, v in _SHAPE_TAGS.items() if isinstance(s, v))
        return {"kind": tag, **{k: v for k, v in s.__dict__.items() if v is not None}}

    def count_d(c: CountDist) -> dict:
        tag = next(k for k, v in _COUNT_TAGS.items() if isinstance(c, v))
        return {"kind": tag, **c.__dict__}

    bg = {"fraction": spec.background.fraction} if spec.background.fraction is not None \
        else {"count": spec.background.count}
    return {
        "extent": [spec.extent.xmin, spec.extent.ymin, spec.extent.xmax, spec.extent.ymax],
        "cluster_groups": [
            {"count": g.count, "molecules": count_d(g.molecules),
             "shape": shape_d(g.shape), "class_id": g.class_id}
            for g in spec.cluster_groups
        ],
        "background": bg,
        "min_cluster_separation": spec.min_cluster_separation,
        "seed": spec.seed,
    }


def spec_from_dict(doc: dict) -> ScenarioSpec:
    def shape_f(d: dict) -> Shape:
        d = dict(d)
        kind = d.pop("kind")
        if kind not in _SHAPE_TAGS:
            raise ValueError(f"unknown shape kind {kind!r}")
        return _SHAPE_TAGS[kind](**d)

    def count_f(d: dict) -> CountDist:
        d = dict(d)
        kind = d.pop("kind")
        if kind not in _COUNT_TAGS:
            raise ValueError(f"unknown molecule-count kind {kind!r}")
        return _COUNT_TAGS[kind](**d)

    extent = Rect(*[float(v) for v in doc["extent"]])
    groups = tuple(
        ClusterGroup(count=int(g["count"]), molecules=count_f(g["molecules"]),
                     shape=shape_f(g["shape"]), class_id=int(g.get("class_id", 1)))
        for g in doc["cluster_groups"]
    )
    bg = Background(**{k: doc["background"][k] for k in ("fraction", "count")
                       if k in doc["background"]})
    return ScenarioSpec(extent=extent, cluster_groups=groups, background=bg,
                        min_cluster_separation=float(doc.get("min_cluster_separation", 0.0)),
                        seed=int(doc.get("seed", 0)))
