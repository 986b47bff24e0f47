import numpy as np
import pytest

from miro.core import (NOISE, CloudFormatError, LabeledCloud, Localization,
                       Partition, PointCloud, Rect, centroid, read_cloud,
                       write_cloud)


def test_centroid_midpoint():
    assert np.allclose(centroid([(0, 0), (2, 0)]), (1, 0))


def test_centroid_singleton():
    assert np.allclose(centroid([(5, 5)]), (5, 5))


def test_centroid_uniform_square():
    # law of large numbers: 1000 uniform points, fixed seed
    pts = np.random.default_rng(7).uniform(0, 1, size=(1000, 2))
    assert np.linalg.norm(centroid(pts) - [0.5, 0.5]) < 0.05


def test_centroid_empty_rejected():
    with pytest.raises(ValueError, match="empty point set"):
        centroid(np.empty((0, 2)))


def test_localization_validation():
    with pytest.raises(ValueError):
        Localization(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Localization(0.0, 0.0, frame=-1)
    assert Localization(1.0, 2.0, frame=3).frame == 3


def test_pointcloud_extent_grows_to_fit():
    cloud = PointCloud([(0, 0), (10, 5)], extent=Rect(2, 2, 3, 3))
    assert cloud.extent.xmin <= 0 and cloud.extent.xmax >= 10
    assert all(cloud.extent.contains(x, y) for x, y in cloud.coords)


def test_pointcloud_immutable():
    cloud = PointCloud([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        cloud.coords[0, 0] = 5.0


def test_partition_rejects_labels_below_noise():
    with pytest.raises(ValueError):
        Partition([0, -2])


def test_labeled_cloud_validates_lengths():
    cloud = PointCloud([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        LabeledCloud(cloud, truth=Partition([0]))
    with pytest.raises(ValueError):
        LabeledCloud(cloud, truth=Partition([0, 1]), shape_class=[1])


def test_labeled_cloud_noise_class_invariant():
    cloud = PointCloud([(0, 0), (1, 1)])
    with pytest.raises(ValueError, match="background class"):
        LabeledCloud(cloud, truth=Partition([NOISE, 0]), shape_class=[1, 1])


def test_labeled_cloud_refinement_invariant():
    cloud = PointCloud([(0, 0), (1, 1), (2, 2)])
    # fine cluster 0 spans coarse clusters 0 and 1 -> invalid
    with pytest.raises(ValueError, match="refine"):
        LabeledCloud(cloud, truth=Partition([0, 0, 1]),
                     coarse_truth=Partition([0, 1, 1]))
    ok = LabeledCloud(cloud, truth=Partition([0, 1, 1]),
                      coarse_truth=Partition([0, 0, 0]))
    assert len(ok) == 3


def test_read_minimal_file(tmp_path):
    path = tmp_path / "min.csv"
    path.write_text("x_nm,y_nm\n1.5,2.5\n", encoding="utf-8")
    labeled = read_cloud(path)
    assert len(labeled) == 1
    assert labeled.truth is None
    assert np.allclose(labeled.cloud.coords, [[1.5, 2.5]])


def test_read_noise_convention(tmp_path):
    path = tmp_path / "n.csv"
    path.write_text("x_nm,y_nm,cluster_id\n1,2,-1\n3,4,0\n", encoding="utf-8")
    labeled = read_cloud(path)
    assert labeled.truth.labels.tolist() == [NOISE, 0]


def test_roundtrip_three_rows(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("x_nm,y_nm,cluster_id\n0.1,0.2,0\n0.30000000000000004,4,-1\n7,8,1\n",
                    encoding="utf-8")
    first = read_cloud(path)
    path2 = tmp_path / "c2.csv"
    write_cloud(path2, first)
    second = read_cloud(path2)
    assert np.array_equal(first.cloud.coords, second.cloud.coords)
    assert first.truth == second.truth


def test_roundtrip_full_columns(tmp_path):
    rng = np.random.default_rng(3)
    coords = rng.normal(0, 123.456, size=(50, 2))
    frames = rng.integers(0, 1000, size=50)
    truth = rng.integers(-1, 4, size=50)
    classes = np.where(truth == NOISE, 0, 1)
    coarse = np.where(truth == NOISE, NOISE, 0)
    labeled = LabeledCloud(PointCloud(coords, frames=frames),
                           truth=Partition(truth), shape_class=classes,
                           coarse_truth=Partition(coarse))
    path = tmp_path / "full.csv"
    write_cloud(path, labeled)
    header = path.read_text().splitlines()[0]
    assert header == "x_nm,y_nm,frame,cluster_id,class_id,coarse_id"
    back = read_cloud(path)
    assert np.array_equal(back.cloud.coords, coords)  # bit-exact round trip
    assert np.array_equal(back.cloud.frames, frames)
    assert np.array_equal(back.truth.labels, truth)
    assert np.array_equal(back.shape_class, classes)
    assert np.array_equal(back.coarse_truth.labels, coarse)


def test_malformed_row_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_nm,y_nm\n1,2\nnot-a-number,3\n", encoding="utf-8")
    with pytest.raises(CloudFormatError, match="line 3"):
        read_cloud(path)


def test_inconsistent_column_count(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_nm,y_nm,cluster_id\n1,2,0\n1,2\n", encoding="utf-8")
    with pytest.raises(CloudFormatError, match="line 3"):
        read_cloud(path)


def test_out_of_order_columns_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_nm,y_nm,class_id,cluster_id\n1,2,0,0\n", encoding="utf-8")
    with pytest.raises(CloudFormatError, match="order"):
        read_cloud(path)


def test_crlf_accepted(tmp_path):
    path = tmp_path / "crlf.csv"
    path.write_bytes(b"x_nm,y_nm,cluster_id\r\n1,2,0\r\n")
    assert len(read_cloud(path)) == 1
