"""Point clouds, pinhole cameras, projection and cloud subsampling.

Conventions: the camera looks down +z with x to the right and y down, so the
continuous image coordinates are ``u = fx * x / z + cx`` (columns) and
``v = fy * y / z + cy`` (rows).  Pixel ``(row, col)`` covers
``[row, row + 1) x [col, col + 1)``, i.e. pixel index = floor of the
continuous coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import CalibrationFormatError, DuplicateViewId, EmptyCloud, PlyFormatError
from .taxonomy import VOID

DEFAULT_Z_NEAR = 0.01


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points in the world frame with optional per-point class ids.

    Index ``i`` is the identity of a point in every downstream structure.
    """

    positions: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "positions", _frozen(pos))
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.ndim != 1 or lab.shape[0] != pos.shape[0]:
                raise ValueError(
                    f"labels length {lab.shape} does not match {pos.shape[0]} points"
                )
            if lab.size and (lab.min() < 0 or lab.max() > 255):
                raise ValueError("labels must be in [0, 255]")
            object.__setattr__(self, "labels", _frozen(lab.astype(np.uint8)))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices: np.ndarray) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return PointCloud(self.positions[indices], labels)


@dataclass(frozen=True)
class ViewGeometry:
    height: int
    width: int
    fx: float
    fy: float
    cx: float
    cy: float
    z_near: float = DEFAULT_Z_NEAR

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be >= 1")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not self.z_near > 0:
            raise ValueError("z_near must be positive")


@dataclass(frozen=True, eq=False)
class CameraView:
    """A pinhole view: intrinsics plus a world-to-camera rigid transform."""

    geometry: ViewGeometry
    rotation: np.ndarray
    translation: np.ndarray
    view_id: int
    image_name: str

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(rot) - 1.0) > 1e-9 or np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
            raise ValueError(f"view {self.view_id}: rotation is not orthonormal with det 1")
        if self.view_id < 0:
            raise ValueError("view_id must be non-negative")
        if not self.image_name or any(c.isspace() for c in self.image_name):
            raise ValueError(f"invalid image name {self.image_name!r}")
        object.__setattr__(self, "rotation", _frozen(rot))
        object.__setattr__(self, "translation", _frozen(trans))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.geometry.height, self.geometry.width)


class PixelCoord(NamedTuple):
    row: int
    col: int


class Visible(NamedTuple):
    pixel: PixelCoord
    depth: float


class Projections(NamedTuple):
    """Vectorised projection result; ``rows``/``cols``/``depth`` are valid only where ``visible``."""

    visible: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    depth: np.ndarray


def to_camera_frame(positions: np.ndarray, view: CameraView) -> np.ndarray:
    # Written out term by term so a single point and a batch round identically.
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    R, t = view.rotation, view.translation
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    xc = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0]
    yc = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1]
    zc = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2]
    return np.stack([xc, yc, zc], axis=1)


def continuous_uv(camera_points: np.ndarray, geometry: ViewGeometry) -> tuple[np.ndarray, np.ndarray]:
    xc, yc, zc = camera_points[:, 0], camera_points[:, 1], camera_points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = geometry.fx * xc / zc + geometry.cx
        v = geometry.fy * yc / zc + geometry.cy
    return u, v


def project_points(positions: np.ndarray, view: CameraView) -> Projections:
    """Project many points into ``view``."""
    g = view.geometry
    cam = to_camera_frame(positions, view)
    u, v = continuous_uv(cam, g)
    in_front = cam[:, 2] >= g.z_near
    row_f = np.floor(np.where(in_front, v, -1.0))
    col_f = np.floor(np.where(in_front, u, -1.0))
    visible = in_front & (row_f >= 0) & (row_f < g.height) & (col_f >= 0) & (col_f < g.width)
    rows = np.where(visible, row_f, 0).astype(np.int64)
    cols = np.where(visible, col_f, 0).astype(np.int64)
    return Projections(visible, rows, cols, cam[:, 2])


def project_point(point, view: CameraView) -> Optional[Visible]:
    """Project one world point; ``None`` means not visible."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    proj = project_points(p, view)
    if not proj.visible[0]:
        return None
    return Visible(PixelCoord(int(proj.rows[0]), int(proj.cols[0])), float(proj.depth[0]))


def check_unique_view_ids(views: Iterable[CameraView]) -> None:
    seen = set()
    for view in views:
        if view.view_id in seen:
            raise DuplicateViewId(f"view_id {view.view_id} appears more than once")
        seen.add(view.view_id)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera ``(rotation, translation)`` for a camera at ``eye`` facing ``target``.

    The image y axis points along ``-up`` projected onto the image plane.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("up vector is parallel to the viewing direction")
    right /= norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ eye


# -- subsampling -------------------------------------------------------------


def voxel_keys(positions: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(np.asarray(positions, dtype=np.float64) / voxel_size).astype(np.int64)


def voxel_subsample(cloud: PointCloud, voxel_size: float) -> tuple[PointCloud, np.ndarray]:
    """Keep one measured point per occupied voxel of side ``voxel_size``.

    The representative is the member nearest the voxel centre (ties: lowest
    index) and carries the voxel's majority label (ties: lowest class id).
    Output is ordered by voxel key, lexicographically.
    """
    if not voxel_size > 0:
        raise ValueError("voxel_size must be positive")
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("cannot subsample an empty cloud")
    keys = voxel_keys(cloud.positions, voxel_size)
    _, group = np.unique(keys, axis=0, return_inverse=True)
    group = group.reshape(-1)
    centers = (keys + 0.5) * voxel_size
    dist2 = np.sum((cloud.positions - centers) ** 2, axis=1)
    idx = np.arange(n)
    order = np.lexsort((idx, dist2, group))
    first = np.ones(n, dtype=bool)
    first[1:] = group[order[1:]] != group[order[:-1]]
    rep = order[first]

    labels = None
    if cloud.labels is not None:
        lab = cloud.labels.astype(np.int64)
        pair, counts = np.unique(group * 256 + lab, return_counts=True)
        g_of, l_of = pair // 256, pair % 256
        # per group: highest count, then lowest label
        order2 = np.lexsort((l_of, -counts, g_of))
        first2 = np.ones(order2.size, dtype=bool)
        first2[1:] = g_of[order2[1:]] != g_of[order2[:-1]]
        labels = l_of[order2[first2]].astype(np.uint8)
    return PointCloud(cloud.positions[rep], labels), rep.astype(np.int64)


def cylinder_crop(cloud: PointCloud, center_xy, radius: float) -> tuple[PointCloud, np.ndarray]:
    """Keep points whose horizontal distance to ``center_xy`` is at most ``radius``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    cx, cy = (float(c) for c in center_xy)
    dx = cloud.positions[:, 0] - cx
    dy = cloud.positions[:, 1] - cy
    keep = np.flatnonzero(dx * dx + dy * dy <= radius * radius)
    return cloud.subset(keep), keep.astype(np.int64)


# -- PLY ---------------------------------------------------------------------

_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_LABEL_TYPES = {"uchar", "uint8"}


def write_ply(path, cloud: PointCloud) -> None:
    """Write the ASCII PLY subset: ``x y z`` and an optional ``label`` column."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if cloud.labels is not None:
        lines.append("property uchar label")
    lines.append("end_header")
    body = []
    if cloud.labels is None:
        for x, y, z in cloud.positions.tolist():
            body.append(f"{x!r} {y!r} {z!r}")
    else:
        for (x, y, z), lab in zip(cloud.positions.tolist(), cloud.labels.tolist()):
            body.append(f"{x!r} {y!r} {z!r} {lab}")
    Path(path).write_text("\n".join(lines + body) + "\n", encoding="ascii")


def read_ply(path) -> PointCloud:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise PlyFormatError(f"{path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError(f"{path}: missing 'ply' magic")
    count = None
    props: list[tuple[str, str]] = []
    fmt_ok = False
    i = 1
    while True:
        if i >= len(lines):
            raise PlyFormatError(f"{path}: missing end_header")
        tokens = lines[i].split()
        i += 1
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            if tokens[1:] != ["ascii", "1.0"]:
                raise PlyFormatError(f"{path}: only 'format ascii 1.0' is supported")
            fmt_ok = True
        elif tokens[0] == "element":
            if len(tokens) != 3 or tokens[1] != "vertex" or count is not None:
                raise PlyFormatError(f"{path}: unsupported element line {lines[i - 1]!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise PlyFormatError(f"{path}: bad vertex count") from None
            if count < 0:
                raise PlyFormatError(f"{path}: negative vertex count")
        elif tokens[0] == "property":
            if len(tokens) != 3:
                raise PlyFormatError(f"{path}: unsupported property line {lines[i - 1]!r}")
            props.append((tokens[1], tokens[2]))
        else:
            raise PlyFormatError(f"{path}: unexpected header line {lines[i - 1]!r}")
    if not fmt_ok or count is None:
        raise PlyFormatError(f"{path}: header lacks format or vertex element")
    names = [name for _, name in props]
    if names not in (["x", "y", "z"], ["x", "y", "z", "label"]):
        raise PlyFormatError(f"{path}: properties must be 'x y z' with optional 'label', got {names}")
    for dtype, name in props:
        allowed = _LABEL_TYPES if name == "label" else _FLOAT_TYPES
        if dtype not in allowed:
            raise PlyFormatError(f"{path}: property {name} has unsupported type {dtype}")
    body = [ln for ln in lines[i:] if ln.strip()]
    if len(body) != count:
        raise PlyFormatError(f"{path}: expected {count} vertices, found {len(body)}")
    ncol = len(names)
    try:
        table = np.array([[float(tok) for tok in ln.split()] for ln in body], dtype=np.float64)
    except ValueError as exc:
        raise PlyFormatError(f"{path}: {exc}") from None
    if count == 0:
        table = np.zeros((0, ncol))
    if table.ndim != 2 or table.shape[1] != ncol:
        raise PlyFormatError(f"{path}: every vertex line needs {ncol} values")
    if not np.all(np.isfinite(table[:, :3])):
        raise PlyFormatError(f"{path}: non-finite coordinate")
    labels = None
    if ncol == 4:
        lab = table[:, 3]
        if np.any(lab != np.floor(lab)) or np.any(lab < 0) or np.any(lab > 255):
            raise PlyFormatError(f"{path}: labels must be integers in [0, 255]")
        labels = lab.astype(np.uint8)
    return PointCloud(table[:, :3], labels)


# -- calibration -------------------------------------------------------------

_CALIB_FIELDS = 8 + 9 + 3


def write_calibration(path, views: Iterable[CameraView]) -> None:
    """One line per view: ``view_id image_name height width fx fy cx cy r00..r22 tx ty tz``."""
    lines = ["# view_id image_name height width fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz"]
    for view in views:
        g = view.geometry
        nums = [g.fx, g.fy, g.cx, g.cy, *view.rotation.reshape(-1).tolist(), *view.translation.tolist()]
        lines.append(
            f"{view.view_id} {view.image_name} {g.height} {g.width} " + " ".join(repr(float(x)) for x in nums)
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_calibration(path, z_near: float = DEFAULT_Z_NEAR) -> list[CameraView]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CalibrationFormatError(f"{path}: {exc}") from exc
    views = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != _CALIB_FIELDS:
            raise CalibrationFormatError(f"{path}:{lineno}: expected {_CALIB_FIELDS} fields, got {len(tok)}")
        try:
            view_id, name, h, w = int(tok[0]), tok[1], int(tok[2]), int(tok[3])
            fx, fy, cx, cy = (float(x) for x in tok[4:8])
            rot = np.array([float(x) for x in tok[8:17]]).reshape(3, 3)
            trans = np.array([float(x) for x in tok[17:20]])
            views.append(CameraView(ViewGeometry(h, w, fx, fy, cx, cy, z_near), rot, trans, view_id, name))
        except ValueError as exc:
            raise CalibrationFormatError(f"{path}:{lineno}: {exc}") from None
    check_unique_view_ids(views)
    return views


__all__ = [
    "VOID",
    "PointCloud",
    "ViewGeometry",
    "CameraView",
    "PixelCoord",
    "Visible",
    "project_point",
    "project_points",
    "voxel_subsample",
    "cylinder_crop",
    "read_ply",
    "write_ply",
    "read_calibration",
    "write_calibration",
    "look_at",
]
