"""2D-to-3D extrusion.

``extract_class_pixels`` turns a label map into per-class pixel lists that are
persisted as one JSON document per image.  ``reduce_point_subspace`` then
keeps only the point-pixel pairs whose pixel is listed under a target class,
which in turn selects the subset of the cloud handed to 3D classification.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import (
    DuplicatePixel,
    IoFailure,
    MalformedJson,
    MapFormatError,
    NonIntegerPixel,
    PixelOutOfBounds,
    UnknownClassId,
)
from .labels import LabelMap
from .mapping import PointPixelMap
from .taxonomy import NUM_CLASSES, VOID, validate_targets


@dataclass(frozen=True, eq=False)
class ClassPixelIndex:
    """Per-class sorted ``(row, col)`` pixel arrays for one image."""

    image_name: str
    pixels_by_class: dict

    def __post_init__(self):
        clean = {}
        for cls in sorted(self.pixels_by_class):
            px = np.asarray(self.pixels_by_class[cls], dtype=np.int64).reshape(-1, 2)
            if px.shape[0] == 0:
                continue
            order = np.lexsort((px[:, 1], px[:, 0]))
            px = px[order]
            if px.shape[0] > 1 and np.any(np.all(px[1:] == px[:-1], axis=1)):
                raise DuplicatePixel(f"{self.image_name}: class {cls} lists a pixel twice")
            px.setflags(write=False)
            clean[int(cls)] = px
        object.__setattr__(self, "pixels_by_class", clean)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClassPixelIndex):
            return NotImplemented
        if self.image_name != other.image_name or self.pixels_by_class.keys() != other.pixels_by_class.keys():
            return False
        return all(np.array_equal(v, other.pixels_by_class[k]) for k, v in self.pixels_by_class.items())

    @property
    def classes(self) -> list[int]:
        return list(self.pixels_by_class)

    def as_lists(self) -> dict[int, list[tuple[int, int]]]:
        return {c: [tuple(p) for p in px.tolist()] for c, px in self.pixels_by_class.items()}

    def pixel_keys(self, targets: Iterable[int]) -> np.ndarray:
        """Packed ``row << 32 | col`` keys of every pixel listed under ``targets``."""
        parts = [self.pixels_by_class[c] for c in sorted(set(targets)) if c in self.pixels_by_class]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        px = np.concatenate(parts)
        return np.unique(_pack(px[:, 0], px[:, 1]))


def _pack(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return (np.asarray(rows, dtype=np.int64) << 32) | np.asarray(cols, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ReductionResult:
    reduced_map: PointPixelMap
    retained_point_ids: np.ndarray
    per_view_retained: dict


_check_targets = validate_targets
_DECIMAL = re.compile(r"[0-9]+")


def extract_class_pixels(label_map: LabelMap, targets: Iterable[int], image_name: str) -> ClassPixelIndex:
    targets = _check_targets(targets)
    values = label_map.values
    out = {}
    for cls in sorted(targets):
        # argwhere scans in C order, so pixels come out sorted by (row, col)
        px = np.argwhere(values == cls)
        if px.size:
            out[cls] = px
    return ClassPixelIndex(image_name, out)


def index_to_json(index: ClassPixelIndex) -> str:
    obj = {str(c): px.tolist() for c, px in index.pixels_by_class.items()}
    return json.dumps(obj, separators=(",", ":"))


def index_path(directory, image_name: str) -> Path:
    return Path(directory) / f"{image_name}.json"


def write_class_pixel_index(index: ClassPixelIndex, directory) -> Path:
    path = index_path(directory, index.image_name)
    try:
        path.write_text(index_to_json(index), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def parse_class_pixel_index(
    text: str, image_name: str, shape: Optional[tuple[int, int]] = None
) -> ClassPixelIndex:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{image_name}: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedJson(f"{image_name}: top level must be an object")
    out = {}
    for key, pixels in obj.items():
        if not _DECIMAL.fullmatch(key):
            raise MalformedJson(f"{image_name}: key {key!r} is not a decimal class id")
        cls = int(key)
        if cls == VOID or cls >= NUM_CLASSES:
            raise UnknownClassId(f"{image_name}: class id {cls} is not in the taxonomy")
        if not isinstance(pixels, list):
            raise MalformedJson(f"{image_name}: class {cls} value must be a list")
        for px in pixels:
            if not isinstance(px, list) or len(px) != 2:
                raise MalformedJson(f"{image_name}: pixel {px!r} is not a [row, col] pair")
            if not (_is_int(px[0]) and _is_int(px[1])):
                raise NonIntegerPixel(f"{image_name}: pixel {px!r} has non-integer coordinates")
            if px[0] < 0 or px[1] < 0:
                raise PixelOutOfBounds(f"{image_name}: negative pixel {px!r}")
            if shape is not None and (px[0] >= shape[0] or px[1] >= shape[1]):
                raise PixelOutOfBounds(f"{image_name}: pixel {px!r} outside {shape[0]}x{shape[1]}")
        out[cls] = np.array(pixels, dtype=np.int64).reshape(-1, 2)
    return ClassPixelIndex(image_name, out)


def read_class_pixel_index(path, shape: Optional[tuple[int, int]] = None) -> ClassPixelIndex:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_class_pixel_index(text, path.stem, shape)


def _reduce_view(part: PointPixelMap, index: Optional[ClassPixelIndex], targets) -> np.ndarray:
    if index is None or len(part) == 0:
        return np.zeros(0, dtype=np.int64)
    keys = index.pixel_keys(targets)
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.isin(_pack(part.rows, part.cols), keys, assume_unique=False))


def reduce_point_subspace(
    ppmap: PointPixelMap,
    indexes: Mapping[int, ClassPixelIndex],
    targets: Iterable[int],
    threads: int = 1,
) -> ReductionResult:
    """Keep the map entries whose pixel is listed under some target class.

    A point is retained if any of its entries survives.  Views without an
    index contribute nothing.
    """
    targets = _check_targets(targets)
    view_ids = ppmap.view_id_set()
    bounds = np.searchsorted(ppmap.view_ids, [[v, v + 1] for v in view_ids]) if view_ids else []

    def run(k):
        lo, hi = bounds[k]
        part = ppmap.take(np.arange(lo, hi))
        return lo + _reduce_view(part, indexes.get(view_ids[k]), targets)

    if threads > 1 and len(view_ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            kept = list(pool.map(run, range(len(view_ids))))
    else:
        kept = [run(k) for k in range(len(view_ids))]
    keep = np.concatenate(kept) if kept else np.zeros(0, dtype=np.int64)
    reduced = ppmap.take(keep)
    per_view = {v: int(k.size) for v, k in zip(view_ids, kept)}
    return ReductionResult(reduced, np.unique(reduced.point_ids), per_view)


def reduce_point_subspace_linear(
    ppmap: PointPixelMap, indexes: Mapping[int, ClassPixelIndex], targets: Iterable[int]
) -> ReductionResult:
    """Reference form with a linear ``pixel in pixel_list`` scan per entry.

    Same result as :func:`reduce_point_subspace`; kept for benchmarking the
    set-based lookup against it.
    """
    targets = _check_targets(targets)
    lists = {}
    for v, index in indexes.items():
        lists[v] = [tuple(p) for c in sorted(targets) if c in index.pixels_by_class for p in index.pixels_by_class[c].tolist()]
    keep = []
    per_view: dict[int, int] = {v: 0 for v in ppmap.view_id_set()}
    for k, (v, _p, r, c, _d) in enumerate(ppmap.entries()):
        pixel_list = lists.get(v)
        if pixel_list and (r, c) in pixel_list:
            keep.append(k)
            per_view[v] += 1
    reduced = ppmap.take(np.array(keep, dtype=np.int64))
    return ReductionResult(reduced, np.unique(reduced.point_ids), per_view)


def write_retained_ids(path, ids: np.ndarray) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in np.asarray(ids).tolist()), encoding="ascii")


def read_retained_ids(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if not _DECIMAL.fullmatch(line):
            raise MapFormatError(f"{path}:{lineno}: not a point id: {line!r}")
        out.append(int(line))
    return np.array(out, dtype=np.int64)
