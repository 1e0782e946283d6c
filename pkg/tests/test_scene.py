import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extrude3d.errors import DuplicateViewId, EmptyCloud, PlyFormatError
from extrude3d.scene import (
    CameraView,
    PixelCoord,
    PointCloud,
    ViewGeometry,
    Visible,
    check_unique_view_ids,
    continuous_uv,
    cylinder_crop,
    look_at,
    project_point,
    project_points,
    read_calibration,
    read_ply,
    to_camera_frame,
    voxel_subsample,
    write_calibration,
    write_ply,
)

import oracles
from conftest import random_scene


class TestProjectPoint:
    def test_optical_axis_hits_principal_point(self, simple_view):
        assert project_point((0, 0, 2), simple_view) == Visible(PixelCoord(24, 32), 2.0)

    def test_behind_camera(self, simple_view):
        assert project_point((0, 0, -1), simple_view) is None

    def test_pinhole_formula(self, simple_view):
        # u = 100 * 1 / 2 + 32.5 = 82.5, v = 24.5
        u, v = continuous_uv(to_camera_frame(np.array([[1.0, 0.0, 2.0]]), simple_view), simple_view.geometry)
        assert (u[0], v[0]) == (82.5, 24.5)
        # col 82 lies outside a 64-wide image, so the bounds rule hides it there
        assert project_point((1, 0, 2), simple_view) is None
        wide = CameraView(ViewGeometry(48, 128, 100.0, 100.0, 32.5, 24.5), np.eye(3), np.zeros(3), 1, "wide")
        assert project_point((1, 0, 2), wide) == Visible(PixelCoord(24, 82), 2.0)

    def test_out_of_bounds_is_not_visible(self, simple_view):
        assert project_point((10, 0, 1), simple_view) is None
        assert project_point((0, -10, 1), simple_view) is None

    def test_near_plane(self, simple_view):
        assert project_point((0, 0, 0.005), simple_view) is None
        assert project_point((0, 0, 0.01), simple_view) is not None

    def test_pixel_edge_is_floor(self):
        geom = ViewGeometry(4, 4, 1.0, 1.0, 0.0, 0.0)
        view = CameraView(geom, np.eye(3), np.zeros(3), 0, "edge")
        # u = 1.0 exactly -> column 1; u just below -> column 0
        assert project_point((1.0, 0.0, 1.0), view).pixel == (0, 1)
        assert project_point((math.nextafter(1.0, 0.0), 0.0, 1.0), view).pixel == (0, 0)

    def test_rejects_non_finite(self, simple_view):
        with pytest.raises(ValueError):
            project_point((math.nan, 0, 1), simple_view)

    def test_batch_matches_scalar_oracle(self):
        cloud, views = random_scene(3, n_points=500, n_views=2)
        for view in views:
            proj = project_points(cloud.positions, view)
            for i, p in enumerate(cloud.positions):
                expect = oracles.project(p, view)
                if expect is None:
                    assert not proj.visible[i]
                else:
                    assert proj.visible[i]
                    assert (proj.rows[i], proj.cols[i], proj.depth[i]) == expect

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 50), st.floats(1.0, 100.0)
    )
    def test_scale_consistency(self, x, y, z, lam):
        geom = ViewGeometry(48, 64, 100.0, 90.0, 32.5, 24.5)
        view = CameraView(geom, np.eye(3), np.zeros(3), 0, "s")
        cam = to_camera_frame(np.array([[x, y, z], [lam * x, lam * y, lam * z]]), view)
        u, v = continuous_uv(cam, geom)
        assert u[0] == pytest.approx(u[1], rel=1e-12, abs=1e-9)
        assert v[0] == pytest.approx(v[1], rel=1e-12, abs=1e-9)


class TestCameraView:
    def test_rejects_non_orthonormal(self):
        geom = ViewGeometry(4, 4, 1, 1, 2, 2)
        with pytest.raises(ValueError):
            CameraView(geom, np.diag([1.0, 1.0, 2.0]), np.zeros(3), 0, "a")
        with pytest.raises(ValueError):
            CameraView(geom, np.diag([1.0, 1.0, -1.0]), np.zeros(3), 0, "a")

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            ViewGeometry(0, 4, 1, 1, 0, 0)
        with pytest.raises(ValueError):
            ViewGeometry(4, 4, -1, 1, 0, 0)
        with pytest.raises(ValueError):
            ViewGeometry(4, 4, 1, 1, 0, 0, z_near=0)

    def test_look_at_is_rigid_and_faces_target(self):
        rot, trans = look_at((1, 2, 3), (5, -1, 0))
        assert abs(np.linalg.det(rot) - 1) < 1e-12
        np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
        cam = rot @ np.array([5.0, -1.0, 0.0]) + trans
        assert cam[0] == pytest.approx(0, abs=1e-12) and cam[1] == pytest.approx(0, abs=1e-12)
        assert cam[2] > 0

    def test_duplicate_view_ids(self, simple_view):
        with pytest.raises(DuplicateViewId):
            check_unique_view_ids([simple_view, simple_view])


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            PointCloud([[0, 0, np.inf]])

    def test_label_length(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), [1, 2])

    def test_immutable(self):
        cloud = PointCloud(np.zeros((2, 3)), [0, 1])
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0


class TestVoxelSubsample:
    def test_same_voxel(self):
        out, idx = voxel_subsample(PointCloud([[0, 0, 0], [0.01, 0, 0]]), 0.05)
        assert len(out) == 1

    def test_distinct_voxels(self):
        out, idx = voxel_subsample(PointCloud([[0, 0, 0], [1, 0, 0]]), 0.05)
        assert len(out) == 2
        assert idx.tolist() == [0, 1]

    def test_empty(self):
        with pytest.raises(EmptyCloud):
            voxel_subsample(PointCloud(np.zeros((0, 3))), 0.05)

    def test_count_matches_hash_grid(self, rng):
        pos = rng.uniform(-1, 1, size=(10_000, 3))
        out, idx = voxel_subsample(PointCloud(pos), 0.05)
        assert len(out) == oracles.voxel_key_count(pos, 0.05)

    def test_representative_and_label(self):
        s = 1.0
        # voxel (0,0,0), centre (0.5, 0.5, 0.5)
        pos = [[0.1, 0.1, 0.1], [0.25, 0.5, 0.5], [0.9, 0.9, 0.9], [0.75, 0.5, 0.5]]
        labels = [3, 7, 3, 7]
        out, idx = voxel_subsample(PointCloud(pos, labels), s)
        # 0.25 and 0.75 tie exactly on distance; lowest index wins. Labels 3 and 7 tie 2:2 -> 3
        assert idx.tolist() == [1]
        assert out.labels.tolist() == [3]

    def test_lexicographic_order(self):
        pos = [[1.5, 0, 0], [0.5, 2, 0], [0.5, 0, 3], [-1, 5, 5]]
        out, idx = voxel_subsample(PointCloud(pos), 1.0)
        assert idx.tolist() == [3, 2, 1, 0]

    def test_majority_label(self):
        pos = [[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [0.3, 0.3, 0.3]]
        out, _ = voxel_subsample(PointCloud(pos, [5, 9, 9]), 1.0)
        assert out.labels.tolist() == [9]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.2, 1.0]))
    def test_idempotent_and_valid_index(self, seed, s):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(-2, 2, size=(300, 3))
        lab = rng.integers(0, 15, size=300)
        out, idx = voxel_subsample(PointCloud(pos, lab), s)
        assert len(set(idx.tolist())) == len(idx)
        assert idx.min() >= 0 and idx.max() < 300
        keys = np.floor(out.positions / s)
        assert len({tuple(k) for k in keys.tolist()}) == len(out)
        again, idx2 = voxel_subsample(out, s)
        assert idx2.tolist() == list(range(len(out)))
        np.testing.assert_array_equal(again.positions, out.positions)
        np.testing.assert_array_equal(again.labels, out.labels)


class TestCylinderCrop:
    def test_boundary(self):
        r = 2.0
        pos = [[r - 1e-6, 0, 5], [r + 1e-6, 0, -5]]
        out, idx = cylinder_crop(PointCloud(pos), (0, 0), r)
        assert idx.tolist() == [0]

    def test_matches_filter_oracle(self, rng):
        pos = rng.uniform(-5, 5, size=(5000, 3))
        out, idx = cylinder_crop(PointCloud(pos), (1.0, -0.5), 2.5)
        expect = [i for i, (x, y, _) in enumerate(pos.tolist()) if (x - 1.0) ** 2 + (y + 0.5) ** 2 <= 2.5**2]
        assert idx.tolist() == expect
        np.testing.assert_array_equal(out.positions, pos[expect])

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 5), st.floats(0.1, 5), st.integers(0, 1000))
    def test_nested(self, r1, r2, seed):
        r1, r2 = min(r1, r2), max(r1, r2)
        pos = np.random.default_rng(seed).uniform(-5, 5, size=(200, 3))
        _, a = cylinder_crop(PointCloud(pos), (0, 0), r1)
        _, b = cylinder_crop(PointCloud(pos), (0, 0), r2)
        assert set(a.tolist()) <= set(b.tolist())


class TestPly:
    def test_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.normal(size=(50, 3)), rng.integers(0, 15, size=50))
        write_ply(tmp_path / "c.ply", cloud)
        back = read_ply(tmp_path / "c.ply")
        np.testing.assert_array_equal(back.positions, cloud.positions)
        np.testing.assert_array_equal(back.labels, cloud.labels)

    def test_without_labels(self, tmp_path):
        write_ply(tmp_path / "c.ply", PointCloud([[1, 2, 3]]))
        assert read_ply(tmp_path / "c.ply").labels is None

    def test_unknown_property_rejected(self, tmp_path):
        (tmp_path / "c.ply").write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
            "property float z\nproperty float intensity\nend_header\n0 0 0 1\n"
        )
        with pytest.raises(PlyFormatError):
            read_ply(tmp_path / "c.ply")

    def test_binary_rejected(self, tmp_path):
        (tmp_path / "c.ply").write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
        with pytest.raises(PlyFormatError):
            read_ply(tmp_path / "c.ply")

    def test_vertex_count_mismatch(self, tmp_path):
        (tmp_path / "c.ply").write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n"
        )
        with pytest.raises(PlyFormatError):
            read_ply(tmp_path / "c.ply")


def test_calibration_round_trip(tmp_path):
    _, views = random_scene(1, n_points=10, n_views=3)
    write_calibration(tmp_path / "calib.txt", views)
    back = read_calibration(tmp_path / "calib.txt")
    for a, b in zip(views, back):
        assert a.view_id == b.view_id and a.image_name == b.image_name
        assert a.geometry == b.geometry
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)
