import json
import math

import numpy as np
import pytest

from extrude3d.errors import MissingLabels, PointBudgetExceeded, SceneSpecError
from extrude3d.scene import PointCloud, write_ply
from extrude3d.synth import (
    Box,
    CameraSpec,
    Cylinder,
    Plane,
    SceneSpec,
    Sphere,
    class_fraction,
    coverage_scene_spec,
    generate_scene,
    load_scene_spec,
    save_scene_spec,
    street_scene_spec,
)
from extrude3d.taxonomy import NUM_CLASSES

CAM = CameraSpec(0, "c0", 48, 64, 50.0, 50.0, 32.0, 24.0, (-10.0, 0.0, 2.0), (0.0, 0.0, 0.0))


def _spec(*objects, seed=7, **kw):
    return SceneSpec(seed=seed, objects=tuple(objects), cameras=(CAM,), **kw)


class TestGenerate:
    def test_plane_count(self):
        cloud, _ = generate_scene(_spec(Plane(0, 100.0, (0, 0, 0), (5.0, 0, 0), (0, 2.0, 0))))
        assert len(cloud) == 1000
        assert np.all(cloud.labels == 0)
        assert np.all(cloud.positions[:, 2] == 0.0)

    def test_deterministic_bytes(self, tmp_path):
        spec = street_scene_spec(seed=3, n_points=5000)
        for name in ("a.ply", "b.ply"):
            write_ply(tmp_path / name, generate_scene(spec)[0])
        assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()

    def test_seed_changes_points(self):
        obj = Plane(0, 10.0, (0, 0, 0), (5.0, 0, 0), (0, 2.0, 0))
        a = generate_scene(_spec(obj, seed=1))[0]
        b = generate_scene(_spec(obj, seed=2))[0]
        assert not np.array_equal(a.positions, b.positions)

    def test_objects_sample_independently(self):
        # adding an object must not perturb the points of the ones before it
        p = Plane(0, 10.0, (0, 0, 0), (5.0, 0, 0), (0, 2.0, 0))
        s = Sphere(8, 10.0, (0, 0, 3), 1.0)
        one = generate_scene(_spec(p))[0]
        two = generate_scene(_spec(p, s))[0]
        assert np.array_equal(two.positions[: len(one)], one.positions)

    def test_sphere_surface(self):
        s = Sphere(8, 200.0, (1.0, -2.0, 3.0), 1.5)
        cloud, _ = generate_scene(_spec(s))
        r = np.linalg.norm(cloud.positions - np.array(s.center), axis=1)
        assert len(cloud) == math.floor(s.area() * 200.0 + 0.5)
        assert np.max(np.abs(r - 1.5)) <= 1e-9

    def test_cylinder_surface(self):
        c = Cylinder(5, 100.0, (2.0, 1.0, 0.0), 0.3, 4.0)
        pos = generate_scene(_spec(c))[0].positions
        r = np.hypot(pos[:, 0] - 2.0, pos[:, 1] - 1.0)
        assert np.max(np.abs(r - 0.3)) <= 1e-9
        assert pos[:, 2].min() >= 0.0 and pos[:, 2].max() <= 4.0

    def test_box_surface(self):
        b = Box(11, 50.0, (0.0, 0.0, 1.0), (4.0, 2.0, 2.0))
        pos = generate_scene(_spec(b))[0].positions
        d = np.abs(pos - np.array(b.center)) - np.array(b.size) / 2
        # every point sits on one face and inside the others' extent
        assert np.all(np.min(np.abs(d), axis=1) <= 1e-9)
        assert np.all(d <= 1e-9)
        # no bottom face by default
        assert np.all(pos[:, 2] > 1e-9)

    def test_rotated_box_on_surface(self):
        b = Box(11, 50.0, (3.0, 1.0, 1.0), (4.0, 2.0, 2.0), yaw_deg=30.0)
        pos = generate_scene(_spec(b))[0].positions - np.array(b.center)
        a = math.radians(30.0)
        rot = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
        d = np.abs(pos @ rot) - np.array(b.size) / 2
        assert np.all(np.min(np.abs(d), axis=1) <= 1e-9)

    def test_budget(self):
        with pytest.raises(PointBudgetExceeded):
            generate_scene(_spec(Plane(0, 100.0, (0, 0, 0), (5.0, 0, 0), (0, 2.0, 0)), max_points=999))

    def test_extent(self):
        with pytest.raises(SceneSpecError):
            generate_scene(_spec(Sphere(0, 1.0, (50.0, 0, 0), 1.0), extent=10.0))

    def test_invalid_objects(self):
        with pytest.raises(SceneSpecError):
            _spec(Plane(15, 1.0, (0, 0, 0), (1, 0, 0), (0, 1, 0)))
        with pytest.raises(SceneSpecError):
            _spec(Plane(0, 0.0, (0, 0, 0), (1, 0, 0), (0, 1, 0)))

    def test_cameras_orthonormal(self):
        _, views = generate_scene(street_scene_spec(seed=5, n_points=2000, n_views=4))
        for v in views:
            np.testing.assert_allclose(v.rotation @ v.rotation.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(v.rotation) == pytest.approx(1.0)


class TestPresets:
    def test_street_has_every_class(self):
        cloud, views = generate_scene(street_scene_spec(seed=1))
        assert set(cloud.labels.tolist()) == set(range(NUM_CLASSES))
        assert abs(len(cloud) - 20_000) < 100
        assert len(views) == 4

    @pytest.mark.parametrize("f", [0.1, 0.5])
    def test_coverage_fraction(self, f):
        cloud, views = generate_scene(coverage_scene_spec(n_points=20_000, target_fraction=f))
        assert class_fraction(cloud, {0}) == pytest.approx(f, abs=0.01)
        assert len(views) == 4

    def test_coverage_bad_fraction(self):
        with pytest.raises(SceneSpecError):
            coverage_scene_spec(target_fraction=1.0)


class TestClassFraction:
    def test_all_one_class(self):
        assert class_fraction(PointCloud(np.zeros((5, 3)), [0] * 5), {0}) == 1.0

    def test_disjoint(self):
        assert class_fraction(PointCloud(np.zeros((5, 3)), [0] * 5), {3, 4}) == 0.0

    def test_count_oracle(self, rng):
        labels = rng.integers(0, NUM_CLASSES, size=1000)
        cloud = PointCloud(np.zeros((1000, 3)), labels)
        targets = {1, 5, 9}
        assert class_fraction(cloud, targets) == sum(1 for x in labels.tolist() if x in targets) / 1000

    def test_unlabeled(self):
        with pytest.raises(MissingLabels):
            class_fraction(PointCloud(np.zeros((2, 3))), {0})


class TestSpecFile:
    def test_round_trip(self, tmp_path):
        spec = street_scene_spec(seed=4, n_points=3000)
        save_scene_spec(tmp_path / "s.json", spec)
        back = load_scene_spec(tmp_path / "s.json")
        assert back == spec
        a, _ = generate_scene(spec)
        b, _ = generate_scene(back)
        assert np.array_equal(a.positions, b.positions)

    def test_hand_written(self, tmp_path):
        doc = {
            "seed": 1,
            "objects": [{"type": "sphere", "class": 8, "density": 10, "center": [0, 0, 0], "radius": 1}],
            "cameras": [
                {"view_id": 0, "image_name": "a", "height": 8, "width": 8, "fx": 5, "fy": 5, "cx": 4, "cy": 4,
                 "eye": [5, 0, 0], "target": [0, 0, 0]}
            ],
        }
        (tmp_path / "s.json").write_text(json.dumps(doc))
        cloud, views = generate_scene(load_scene_spec(tmp_path / "s.json"))
        assert len(cloud) == math.floor(4 * math.pi * 10 + 0.5)
        assert views[0].image_name == "a"

    @pytest.mark.parametrize(
        "doc",
        [
            "[]",
            "{",
            '{"objects": []}',
            '{"seed": 1, "objects": [{"type": "cone", "class": 0, "density": 1}]}',
            '{"seed": 1, "objects": [{"type": "sphere", "class": 0, "density": 1, "center": [0, 0], "radius": 1}]}',
        ],
    )
    def test_malformed(self, tmp_path, doc):
        (tmp_path / "s.json").write_text(doc)
        with pytest.raises(SceneSpecError):
            load_scene_spec(tmp_path / "s.json")
