"""Deterministic synthetic labeled scenes.

A scene is a list of surface primitives (planes, boxes, cylinders, spheres),
each with a class id and a surface density in points/m^2, plus a camera rig.
Points are drawn uniformly over each primitive's surface from a Philox
counter-based stream keyed by ``(seed, object index)``; the stream position is
the point index, so an object's samples never depend on other objects.

Scene spec documents are JSON::

    {
      "seed": 7,
      "extent": 200.0,
      "max_points": 2000000,
      "objects": [
        {"type": "plane", "class": 0, "density": 50,
         "origin": [0, -4, 0], "edge_u": [40, 0, 0], "edge_v": [0, 8, 0]},
        {"type": "box", "class": 11, "density": 80,
         "center": [10, 2, 0.8], "size": [4.2, 1.8, 1.6], "yaw_deg": 0,
         "bottom": false},
        {"type": "cylinder", "class": 5, "density": 200,
         "base": [5, 5, 0], "radius": 0.1, "height": 6},
        {"type": "sphere", "class": 8, "density": 60,
         "center": [20, 7, 3], "radius": 2}
      ],
      "cameras": [
        {"view_id": 0, "image_name": "cam0", "height": 48, "width": 64,
         "fx": 60, "fy": 60, "cx": 32, "cy": 24,
         "eye": [-5, 0, 1.6], "target": [10, 0, 1], "up": [0, 0, 1]}
      ]
    }

``extent`` bounds every coordinate (``|x|, |y|, |z| <= extent``).  A
cylinder is its lateral surface only; a box omits its bottom face unless
``"bottom": true``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import MissingLabels, PointBudgetExceeded, SceneSpecError
from .scene import CameraView, PointCloud, ViewGeometry, look_at
from .taxonomy import NUM_CLASSES

DEFAULT_MAX_POINTS = 2_000_000


def _vec(value, n=3, name="vector") -> tuple:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise SceneSpecError(f"{name} must be a list of {n} numbers") from None
    if len(out) != n or not all(math.isfinite(v) for v in out):
        raise SceneSpecError(f"{name} must be a list of {n} finite numbers")
    return out


def _point_count(area: float, density: float) -> int:
    return int(math.floor(area * density + 0.5))


def _rot_z(yaw_deg: float) -> np.ndarray:
    a = math.radians(yaw_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Plane:
    """Parallelogram ``origin + a * edge_u + b * edge_v`` for a, b in [0, 1]."""

    class_id: int
    density: float
    origin: tuple
    edge_u: tuple
    edge_v: tuple
    type: str = field(default="plane", init=False)

    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.edge_u, self.edge_v)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        ab = rng.random((n, 2))
        return (
            np.asarray(self.origin)
            + ab[:, :1] * np.asarray(self.edge_u)
            + ab[:, 1:] * np.asarray(self.edge_v)
        )


@dataclass(frozen=True)
class Box:
    """Axis-aligned box rotated by ``yaw_deg`` about +z around its centre."""

    class_id: int
    density: float
    center: tuple
    size: tuple
    yaw_deg: float = 0.0
    bottom: bool = False
    type: str = field(default="box", init=False)

    def _faces(self):
        # (axis, sign, face area)
        sx, sy, sz = self.size
        faces = [(0, 1, sy * sz), (0, -1, sy * sz), (1, 1, sx * sz), (1, -1, sx * sz), (2, 1, sx * sy)]
        if self.bottom:
            faces.append((2, -1, sx * sy))
        return faces

    def area(self) -> float:
        return float(sum(a for _, _, a in self._faces()))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        faces = self._faces()
        areas = np.array([a for _, _, a in faces])
        # largest-remainder allocation keeps face counts deterministic
        share = n * areas / areas.sum()
        counts = np.floor(share).astype(np.int64)
        rest = n - counts.sum()
        counts[np.argsort(-(share - counts), kind="stable")[:rest]] += 1
        half = np.asarray(self.size) / 2.0
        parts = []
        for (axis, sign, _), k in zip(faces, counts):
            local = (rng.random((k, 3)) * 2.0 - 1.0) * half
            local[:, axis] = sign * half[axis]
            parts.append(local)
        local = np.concatenate(parts) if parts else np.zeros((0, 3))
        return local @ _rot_z(self.yaw_deg).T + np.asarray(self.center)


@dataclass(frozen=True)
class Cylinder:
    """Vertical lateral surface from ``base`` up to ``base + height``."""

    class_id: int
    density: float
    base: tuple
    radius: float
    height: float
    type: str = field(default="cylinder", init=False)

    def area(self) -> float:
        return 2.0 * math.pi * self.radius * self.height

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        th = rng.random((n, 2))
        ang = 2.0 * math.pi * th[:, 0]
        bx, by, bz = self.base
        return np.stack(
            [bx + self.radius * np.cos(ang), by + self.radius * np.sin(ang), bz + self.height * th[:, 1]],
            axis=1,
        )


@dataclass(frozen=True)
class Sphere:
    class_id: int
    density: float
    center: tuple
    radius: float
    type: str = field(default="sphere", init=False)

    def area(self) -> float:
        return 4.0 * math.pi * self.radius**2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # uniform on the sphere: z uniform in [-1, 1], azimuth uniform
        uv = rng.random((n, 2))
        z = 2.0 * uv[:, 0] - 1.0
        ang = 2.0 * math.pi * uv[:, 1]
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        d = np.stack([s * np.cos(ang), s * np.sin(ang), z], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * d


Primitive = Union[Plane, Box, Cylinder, Sphere]


@dataclass(frozen=True)
class CameraSpec:
    view_id: int
    image_name: str
    height: int
    width: int
    fx: float
    fy: float
    cx: float
    cy: float
    eye: tuple
    target: tuple
    up: tuple = (0.0, 0.0, 1.0)

    def build(self) -> CameraView:
        rot, trans = look_at(self.eye, self.target, self.up)
        return CameraView(
            ViewGeometry(self.height, self.width, self.fx, self.fy, self.cx, self.cy), rot, trans, self.view_id, self.image_name
        )


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    objects: tuple
    cameras: tuple
    extent: float = 1000.0
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise SceneSpecError("seed must be an unsigned 64-bit integer")
        for k, obj in enumerate(self.objects):
            if not 0 <= obj.class_id < NUM_CLASSES:
                raise SceneSpecError(f"object {k}: class {obj.class_id} is not in the taxonomy")
            if not obj.density > 0:
                raise SceneSpecError(f"object {k}: density must be positive")
        ids = [c.view_id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise SceneSpecError("camera view ids must be unique")

    def point_counts(self) -> list[int]:
        return [_point_count(o.area(), o.density) for o in self.objects]

    def to_dict(self) -> dict:
        objs = []
        for o in self.objects:
            d = asdict(o)
            d["class"] = d.pop("class_id")
            objs.append({"type": d.pop("type"), **d})
        return {
            "seed": self.seed,
            "extent": self.extent,
            "max_points": self.max_points,
            "objects": objs,
            "cameras": [asdict(c) for c in self.cameras],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            objects = tuple(_object_from_dict(k, o) for k, o in enumerate(d.get("objects", [])))
            cameras = tuple(_camera_from_dict(c) for c in d.get("cameras", []))
            return cls(
                seed=int(d["seed"]),
                objects=objects,
                cameras=cameras,
                extent=float(d.get("extent", 1000.0)),
                max_points=int(d.get("max_points", DEFAULT_MAX_POINTS)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneSpecError(f"invalid scene spec: {exc!r}") from None


def _object_from_dict(k: int, o: dict) -> Primitive:
    kind = o.get("type")
    common = dict(class_id=int(o["class"]), density=float(o["density"]))
    if kind == "plane":
        return Plane(origin=_vec(o["origin"], name="origin"), edge_u=_vec(o["edge_u"], name="edge_u"),
                     edge_v=_vec(o["edge_v"], name="edge_v"), **common)
    if kind == "box":
        size = _vec(o["size"], name="size")
        if min(size) <= 0:
            raise SceneSpecError(f"object {k}: box size must be positive")
        return Box(center=_vec(o["center"], name="center"), size=size, yaw_deg=float(o.get("yaw_deg", 0.0)),
                   bottom=bool(o.get("bottom", False)), **common)
    if kind == "cylinder":
        r, h = float(o["radius"]), float(o["height"])
        if r <= 0 or h <= 0:
            raise SceneSpecError(f"object {k}: cylinder radius and height must be positive")
        return Cylinder(base=_vec(o["base"], name="base"), radius=r, height=h, **common)
    if kind == "sphere":
        r = float(o["radius"])
        if r <= 0:
            raise SceneSpecError(f"object {k}: sphere radius must be positive")
        return Sphere(center=_vec(o["center"], name="center"), radius=r, **common)
    raise SceneSpecError(f"object {k}: unknown primitive type {kind!r}")


def _camera_from_dict(c: dict) -> CameraSpec:
    return CameraSpec(
        view_id=int(c["view_id"]),
        image_name=str(c["image_name"]),
        height=int(c["height"]),
        width=int(c["width"]),
        fx=float(c["fx"]),
        fy=float(c["fy"]),
        cx=float(c["cx"]),
        cy=float(c["cy"]),
        eye=_vec(c["eye"], name="eye"),
        target=_vec(c["target"], name="target"),
        up=_vec(c.get("up", (0.0, 0.0, 1.0)), name="up"),
    )


def load_scene_spec(path) -> SceneSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneSpecError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise SceneSpecError(f"{path}: scene spec must be a JSON object")
    return SceneSpec.from_dict(data)


def save_scene_spec(path, spec: SceneSpec) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def object_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def generate_scene(spec: SceneSpec) -> tuple[PointCloud, list[CameraView]]:
    counts = spec.point_counts()
    total = sum(counts)
    if total > spec.max_points:
        raise PointBudgetExceeded(f"scene needs {total} points, budget is {spec.max_points}")
    parts, labels = [], []
    for k, (obj, n) in enumerate(zip(spec.objects, counts)):
        parts.append(obj.sample(object_rng(spec.seed, k), n))
        labels.append(np.full(n, obj.class_id, dtype=np.uint8))
    pos = np.concatenate(parts) if parts else np.zeros((0, 3))
    lab = np.concatenate(labels) if labels else np.zeros(0, dtype=np.uint8)
    if pos.size and np.max(np.abs(pos)) > spec.extent:
        raise SceneSpecError(f"scene exceeds its extent of {spec.extent} m")
    return PointCloud(pos, lab), [c.build() for c in spec.cameras]


def class_fraction(cloud: PointCloud, targets: Iterable[int]) -> float:
    if cloud.labels is None:
        raise MissingLabels("class_fraction needs a labeled cloud")
    if len(cloud) == 0:
        return 0.0
    return float(np.isin(cloud.labels, list(targets)).sum()) / len(cloud)


# -- preset scenes ---------------------------------------------------------------


def _scaled(objects: list[Primitive], n_points: int) -> tuple:
    """Rescale densities so the scene holds about ``n_points`` points."""
    raw = sum(o.area() * o.density for o in objects)
    k = n_points / raw
    out = []
    for o in objects:
        d = asdict(o)
        d.pop("type")
        d["density"] = o.density * k
        out.append(type(o)(**d))
    return tuple(out)


def street_scene_spec(
    seed: int = 0,
    n_points: int = 20_000,
    n_views: int = 4,
    height: int = 48,
    width: int = 64,
) -> SceneSpec:
    """Street corridor with every taxonomy class, layout jittered by ``seed``."""
    rng = np.random.default_rng(seed)
    L = 60.0
    objs: list[Primitive] = [
        Plane(0, 1.0, (0.0, -4.0, 0.0), (L, 0.0, 0.0), (0.0, 8.0, 0.0)),
        Plane(1, 1.0, (0.0, 4.0, 0.0), (L, 0.0, 0.0), (0.0, 3.0, 0.0)),
        Plane(1, 1.0, (0.0, -7.0, 0.0), (L, 0.0, 0.0), (0.0, 3.0, 0.0)),
        Plane(9, 1.0, (0.0, -12.0, 0.0), (L, 0.0, 0.0), (0.0, 5.0, 0.0)),
    ]
    x = 2.0
    while x < L - 8:
        w = float(rng.uniform(6, 12))
        h = float(rng.uniform(6, 15))
        objs.append(Box(2, 1.0, (x + w / 2, 11.0, h / 2), (w, 8.0, h)))
        x += w + float(rng.uniform(0.5, 3))
    objs.append(Plane(3, 2.0, (0.0, -12.0, 0.0), (L, 0.0, 0.0), (0.0, 0.0, 2.5)))
    objs.append(Plane(4, 2.0, (5.0, 7.2, 0.0), (20.0, 0.0, 0.0), (0.0, 0.0, 1.2)))
    for px in np.sort(rng.uniform(4, L - 4, size=4)):
        objs.append(Cylinder(5, 20.0, (float(px), 4.5, 0.0), 0.12, 5.5))
    tl = float(rng.uniform(10, L - 10))
    objs.append(Cylinder(5, 20.0, (tl, -4.5, 0.0), 0.12, 4.0))
    objs.append(Box(6, 20.0, (tl, -4.5, 4.5), (0.3, 0.3, 1.0)))
    sg = float(rng.uniform(10, L - 10))
    objs.append(Box(7, 20.0, (sg, 4.8, 2.5), (0.05, 0.8, 0.8)))
    for cx in rng.uniform(3, L - 3, size=5):
        r = float(rng.uniform(1.2, 2.2))
        objs.append(Sphere(8, 1.0, (float(cx), -9.5, 1.0 + r), r))
    for _ in range(3):
        objs.append(Cylinder(10, 10.0, (float(rng.uniform(5, L - 5)), float(rng.uniform(4.5, 6.5)), 0.0), 0.25, 1.75))
    lanes = [-2.0, 2.0]
    for k in range(4):
        cx = float(rng.uniform(6, L - 6))
        objs.append(Box(11, 2.0, (cx, lanes[k % 2], 0.75), (4.3, 1.8, 1.5), yaw_deg=float(rng.uniform(-5, 5))))
    objs.append(Box(12, 1.5, (float(rng.uniform(10, L - 10)), -2.0, 1.6), (8.0, 2.5, 3.2)))
    objs.append(Box(13, 10.0, (float(rng.uniform(5, L - 5)), 2.5, 0.6), (2.0, 0.6, 1.2)))
    objs.append(Box(14, 10.0, (float(rng.uniform(5, L - 5)), 5.5, 0.5), (1.7, 0.4, 1.0)))

    objects = _scaled(objs, n_points)
    f = 0.8 * width
    cams = []
    for k in range(n_views):
        ex = float(rng.uniform(-6, 10) + 10 * k)
        ey = float(rng.uniform(-2, 2))
        eye = (ex, ey, float(rng.uniform(1.5, 3.0)))
        target = (ex + 20.0, float(rng.uniform(-3, 3)), float(rng.uniform(0.0, 2.0)))
        cams.append(CameraSpec(k, f"cam{k:02d}", height, width, f, f, width / 2.0, height / 2.0, eye, target))
    return SceneSpec(seed=seed, objects=objects, cameras=tuple(cams), extent=200.0)


def coverage_scene_spec(
    n_points: int = 100_000,
    target_class: int = 0,
    target_fraction: float = 0.1,
    seed: int = 0,
    height: int = 240,
    width: int = 320,
) -> SceneSpec:
    """Flat ground of class strips seen by nadir cameras.

    The ``target_class`` strip covers ``target_fraction`` of the ground area,
    so it covers about that fraction of the visible points and map entries.
    The remaining area is split evenly between four other classes.
    """
    if not 0 < target_fraction < 1:
        raise SceneSpecError("target_fraction must be in (0, 1)")
    side = 40.0
    others = [c for c in (1, 8, 9, 2) if c != target_class][:3] + [c for c in (3,) if c != target_class]
    objs: list[Primitive] = []
    w_t = side * target_fraction
    objs.append(Plane(target_class, 1.0, (-side / 2, -side / 2, 0.0), (w_t, 0.0, 0.0), (0.0, side, 0.0)))
    w_o = (side - w_t) / len(others)
    x = -side / 2 + w_t
    for c in others:
        objs.append(Plane(c, 1.0, (x, -side / 2, 0.0), (w_o, 0.0, 0.0), (0.0, side, 0.0)))
        x += w_o
    objects = _scaled(objs, n_points)
    # four nadir cameras, one per ground quadrant, image y axis along +y world
    alt = 15.0
    fx = width * alt / (side / 2)
    fy = height * alt / (side / 2)
    cams = []
    for k, (qx, qy) in enumerate([(-1, -1), (1, -1), (-1, 1), (1, 1)]):
        cx_w, cy_w = qx * side / 4, qy * side / 4
        cams.append(
            CameraSpec(k, f"nadir{k}", height, width, fx, fy, width / 2.0, height / 2.0,
                       (cx_w, cy_w, alt), (cx_w, cy_w, 0.0), up=(0.0, -1.0, 0.0))
        )
    return SceneSpec(seed=seed, objects=objects, cameras=tuple(cams), extent=100.0)
