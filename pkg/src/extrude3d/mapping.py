"""Z-buffered point-to-pixel correspondence.

Each point is splatted to the single pixel containing its projection.  A
pixel keeps the nearest point; candidates within ``depth_epsilon`` of the
nearest depth are resolved in favour of the lowest point id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MapFormatError
from .scene import CameraView, PointCloud, check_unique_view_ids, project_points

DEFAULT_DEPTH_EPSILON = 1e-6

_FIELDS = ("view_ids", "point_ids", "rows", "cols", "depths")


@dataclass(frozen=True, eq=False)
class PointPixelMap:
    """Visible (view, point, pixel, depth) entries sorted by ``(view_id, row, col)``.

    Stored column-wise; entry ``k`` is ``(view_ids[k], point_ids[k], rows[k], cols[k], depths[k])``.
    """

    view_ids: np.ndarray
    point_ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        n = None
        for name in _FIELDS:
            dtype = np.float64 if name == "depths" else np.int64
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError("PointPixelMap columns must have equal length")

    @classmethod
    def empty(cls) -> "PointPixelMap":
        return cls(*(np.zeros(0) for _ in _FIELDS))

    @classmethod
    def concat(cls, parts: Sequence["PointPixelMap"]) -> "PointPixelMap":
        if not parts:
            return cls.empty()
        merged = cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS))
        return merged.sorted()

    def __len__(self) -> int:
        return self.view_ids.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPixelMap):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)

    def sorted(self) -> "PointPixelMap":
        order = np.lexsort((self.cols, self.rows, self.view_ids))
        return self.take(order)

    def take(self, index: np.ndarray) -> "PointPixelMap":
        return PointPixelMap(*(getattr(self, f)[index] for f in _FIELDS))

    def entries(self) -> list[tuple[int, int, int, int, float]]:
        return list(
            zip(
                self.view_ids.tolist(),
                self.point_ids.tolist(),
                self.rows.tolist(),
                self.cols.tolist(),
                self.depths.tolist(),
            )
        )

    def view_slice(self, view_id: int) -> "PointPixelMap":
        lo, hi = np.searchsorted(self.view_ids, [view_id, view_id + 1])
        return self.take(np.arange(lo, hi))

    def view_id_set(self) -> list[int]:
        return np.unique(self.view_ids).tolist()


def _build_view(positions: np.ndarray, view: CameraView, depth_epsilon: float) -> PointPixelMap:
    proj = project_points(positions, view)
    pid = np.flatnonzero(proj.visible)
    if pid.size == 0:
        return PointPixelMap.empty()
    rows, cols, depth = proj.rows[pid], proj.cols[pid], proj.depth[pid]
    pix = rows * view.geometry.width + cols

    order = np.lexsort((pid, depth, pix))
    pix_s, depth_s = pix[order], depth[order]
    start = np.ones(order.size, dtype=bool)
    start[1:] = pix_s[1:] != pix_s[:-1]
    group = np.cumsum(start) - 1
    nearest = depth_s[start][group]
    cand = order[depth_s <= nearest + depth_epsilon]

    # among the near-tie candidates of each pixel the lowest point id wins
    order2 = np.lexsort((pid[cand], pix[cand]))
    cand = cand[order2]
    first = np.ones(cand.size, dtype=bool)
    first[1:] = pix[cand[1:]] != pix[cand[:-1]]
    win = cand[first]
    return PointPixelMap(
        np.full(win.size, view.view_id), pid[win], rows[win], cols[win], depth[win]
    )


def build_point_pixel_map(
    cloud: PointCloud,
    views: Sequence[CameraView],
    depth_epsilon: float = DEFAULT_DEPTH_EPSILON,
    threads: int = 1,
) -> PointPixelMap:
    check_unique_view_ids(views)
    if depth_epsilon < 0:
        raise ValueError("depth_epsilon must be >= 0")
    if len(cloud) == 0 or not views:
        return PointPixelMap.empty()
    if threads > 1 and len(views) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda v: _build_view(cloud.positions, v, depth_epsilon), views))
    else:
        parts = [_build_view(cloud.positions, v, depth_epsilon) for v in views]
    return PointPixelMap.concat(parts)


def visible_points(ppmap: PointPixelMap, view_id: int) -> set[int]:
    return set(ppmap.point_ids[ppmap.view_ids == view_id].tolist())


def all_visible_points(ppmap: PointPixelMap) -> np.ndarray:
    return np.unique(ppmap.point_ids)


def write_map(path, ppmap: PointPixelMap) -> None:
    """Text table, one ``view_id point_id row col depth`` line per entry."""
    lines = [
        f"{v} {p} {r} {c} {d!r}"
        for v, p, r, c, d in ppmap.entries()
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="ascii")


def read_map(path) -> PointPixelMap:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise MapFormatError(f"{path}: {exc}") from exc
    cols: list[list] = [[], [], [], [], []]
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        if len(tok) != 5:
            raise MapFormatError(f"{path}:{lineno}: expected 5 fields")
        try:
            for k in range(4):
                cols[k].append(int(tok[k]))
            cols[4].append(float(tok[4]))
        except ValueError:
            raise MapFormatError(f"{path}:{lineno}: malformed entry {line!r}") from None
    ppmap = PointPixelMap(*cols)
    keys = np.stack([ppmap.view_ids, ppmap.rows, ppmap.cols], axis=1)
    if len(ppmap) > 1:
        diff = np.diff(keys, axis=0)
        # first non-zero component of each step must be positive
        nz = diff != 0
        has = nz.any(axis=1)
        firstnz = diff[np.arange(diff.shape[0]), nz.argmax(axis=1)]
        if not (has.all() and (firstnz > 0).all()):
            raise MapFormatError(f"{path}: entries not strictly sorted by (view_id, row, col)")
    return ppmap


def restrict_to_views(ppmap: PointPixelMap, view_ids: Iterable[int]) -> PointPixelMap:
    keep = np.isin(ppmap.view_ids, np.fromiter(view_ids, dtype=np.int64))
    return ppmap.take(np.flatnonzero(keep))
