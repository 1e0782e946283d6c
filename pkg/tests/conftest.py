import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from extrude3d.extrusion import extract_class_pixels  # noqa: E402
from extrude3d.labels import LabelMap, inject_label_noise, render_ground_truth_labels  # noqa: E402
from extrude3d.mapping import build_point_pixel_map  # noqa: E402
from extrude3d.scene import CameraView, PointCloud, ViewGeometry, look_at  # noqa: E402
from extrude3d.taxonomy import NUM_CLASSES, VOID  # noqa: E402


def random_views(rng, n_views, height=48, width=64):
    views = []
    for k in range(n_views):
        ang = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(6, 12)
        eye = (dist * np.cos(ang), dist * np.sin(ang), rng.uniform(0.5, 4.0))
        target = tuple(rng.uniform(-1, 1, size=3))
        rot, trans = look_at(eye, target)
        f = rng.uniform(0.6, 1.2) * width
        geom = ViewGeometry(height, width, f, f, width / 2 + rng.uniform(-3, 3), height / 2 + rng.uniform(-3, 3))
        views.append(CameraView(geom, rot, trans, 10 * k + 3, f"img{k}"))
    return views


def random_scene(seed, n_points=2000, n_views=3, height=48, width=64, num_classes=15):
    """Random labeled cloud in a 8 m cube with deliberate depth ties and shared rays."""
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-4, 4, size=(n_points, 3))
    # exact duplicates and scaled copies along the same ray from the origin
    k = n_points // 20
    pos[n_points - k :] = pos[:k]
    m = n_points // 20
    pos[n_points - k - m : n_points - k] = pos[k : k + m] * 1.0000000001
    labels = rng.integers(0, num_classes, size=n_points)
    return PointCloud(pos, labels), random_views(rng, n_views, height, width)


def random_label_map(rng, h=48, w=64, void_rate=0.2):
    vals = rng.integers(0, NUM_CLASSES, size=(h, w))
    vals[rng.random((h, w)) < void_rate] = VOID
    return LabelMap(vals)


def scene_with_maps(seed, n_points=2000, n_views=3, noise=0.0):
    cloud, views = random_scene(seed, n_points=n_points, n_views=n_views)
    m = build_point_pixel_map(cloud, views)
    maps = {}
    for view in views:
        lm = render_ground_truth_labels(cloud, view, m)
        if noise:
            lm = inject_label_noise(lm, noise, seed + view.view_id)
        maps[view.view_id] = lm
    return cloud, views, m, maps


def indexes_for(views, maps, targets=range(NUM_CLASSES)):
    return {v.view_id: extract_class_pixels(maps[v.view_id], targets, v.image_name) for v in views}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def simple_view():
    geom = ViewGeometry(48, 64, 100.0, 100.0, 32.5, 24.5)
    return CameraView(geom, np.eye(3), np.zeros(3), 0, "v0")
