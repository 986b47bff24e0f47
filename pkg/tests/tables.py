"""The two worked confusion-matrix examples used as a metrics oracle.

Method A finds all 20 clusters but misassigns 20% of the background into
them and loses 10% of clustered points to the background. Method B splits
half the clusters in two, loses 18% of clustered points to the background,
but classifies the background itself better. Coordinates are synthesized so
centroid pairing matches each ground-truth cluster with its main predicted
fragment.
"""

import numpy as np

from miro.core import NOISE, Partition, PointCloud

SPACING = 10_000.0  # inter-cluster spacing, nm


def method_a():
    """20 GT clusters of 50; pred clusters hold 45 true + 10 background."""
    gt, pred, pts = [], [], []
    rng = np.random.default_rng(0)
    bg_far = rng.uniform(5e6, 6e6, size=(800, 2))
    gt += [NOISE] * 800
    pred += [NOISE] * 800
    pts += bg_far.tolist()
    for k in range(20):
        center = np.array([SPACING * (k + 1), 0.0])
        gt += [NOISE] * 10
        pred += [k] * 10
        pts += np.tile(center, (10, 1)).tolist()
        gt += [k] * 45
        pred += [k] * 45
        pts += np.tile(center, (45, 1)).tolist()
        gt += [k] * 5
        pred += [NOISE] * 5
        pts += np.tile(center, (5, 1)).tolist()
    return (PointCloud(np.asarray(pts)), Partition(gt), Partition(pred))


def method_b():
    """GT clusters of 50: ten intact (41 kept), ten split 21/20; background
    5-point spill into each of the 20 'main' predicted clusters."""
    gt, pred, pts = [], [], []
    rng = np.random.default_rng(1)
    bg_far = rng.uniform(5e6, 6e6, size=(900, 2))
    gt += [NOISE] * 900
    pred += [NOISE] * 900
    pts += bg_far.tolist()
    for k in range(10):  # intact clusters -> pred k
        center = np.array([SPACING * (k + 1), 0.0])
        gt += [NOISE] * 5
        pred += [k] * 5
        pts += np.tile(center, (5, 1)).tolist()
        gt += [k] * 9
        pred += [NOISE] * 9
        pts += np.tile(center, (9, 1)).tolist()
        gt += [k] * 41
        pred += [k] * 41
        pts += np.tile(center, (41, 1)).tolist()
    for k in range(10):  # split clusters -> pred 10+2k (main), 11+2k (extra)
        gt_id = 10 + k
        main, extra = 10 + 2 * k, 11 + 2 * k
        center = np.array([SPACING * (gt_id + 1), 0.0])
        off = center + np.array([10.0, 0.0])  # fragment offset, well under xi
        gt += [NOISE] * 5
        pred += [main] * 5
        pts += np.tile(center, (5, 1)).tolist()
        gt += [gt_id] * 9
        pred += [NOISE] * 9
        pts += np.tile(center, (9, 1)).tolist()
        gt += [gt_id] * 21
        pred += [main] * 21
        pts += np.tile(center, (21, 1)).tolist()
        gt += [gt_id] * 20
        pred += [extra] * 20
        pts += np.tile(off, (20, 1)).tolist()
    return (PointCloud(np.asarray(pts)), Partition(gt), Partition(pred))
