"""Per-point classification by multi-view majority vote, and external predictions."""

from __future__ import annotations

import enum
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DuplicatePointId,
    GeometryMismatch,
    MalformedPredictionLine,
    OutOfRangePointId,
    UnknownClassId,
)
from .labels import LabelMap
from .mapping import PointPixelMap
from .scene import CameraView
from .taxonomy import NUM_CLASSES, VOID


class Source(enum.Enum):
    VOTE = "vote"
    EXTERNAL = "external"


@dataclass(frozen=True, eq=False)
class ViewVotes:
    """Sparse vote table: ``counts[k]`` votes for ``class_ids[k]`` on ``point_ids[k]``.

    Rows are sorted by (point_id, class_id) and every count is positive.
    """

    point_ids: np.ndarray
    class_ids: np.ndarray
    counts: np.ndarray

    def as_dict(self) -> dict[int, dict[int, int]]:
        out: dict[int, dict[int, int]] = {}
        for p, c, n in zip(self.point_ids.tolist(), self.class_ids.tolist(), self.counts.tolist()):
            out.setdefault(p, {})[c] = n
        return out

    @classmethod
    def from_dict(cls, counts: Mapping[int, Mapping[int, int]]) -> "ViewVotes":
        rows = sorted((p, c, n) for p, per in counts.items() for c, n in per.items() if n > 0)
        if not rows:
            return cls(*(np.zeros(0, dtype=np.int64) for _ in range(3)))
        p, c, n = (np.array(col, dtype=np.int64) for col in zip(*rows))
        return cls(p, c, n)

    def distributions(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalised vote histograms for voted points: ``(point_ids, probs[n, NUM_CLASSES])``."""
        pts, inv = np.unique(self.point_ids, return_inverse=True)
        hist = np.zeros((pts.size, NUM_CLASSES))
        np.add.at(hist, (inv, self.class_ids), self.counts)
        return pts, hist / hist.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class PredictedLabels:
    """Predicted class per point; points absent from ``point_ids`` are unclassified."""

    point_ids: np.ndarray
    classes: np.ndarray
    source: Source

    def __post_init__(self):
        pid = np.asarray(self.point_ids, dtype=np.int64).reshape(-1)
        cls = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        if pid.size != cls.size:
            raise ValueError("point_ids and classes must have equal length")
        order = np.argsort(pid, kind="stable")
        object.__setattr__(self, "point_ids", pid[order])
        object.__setattr__(self, "classes", cls[order])

    def __len__(self) -> int:
        return self.point_ids.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictedLabels):
            return NotImplemented
        return np.array_equal(self.point_ids, other.point_ids) and np.array_equal(self.classes, other.classes)

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.point_ids.tolist(), self.classes.tolist()))

    def dense(self, num_points: int) -> np.ndarray:
        out = np.full(num_points, VOID, dtype=np.int64)
        out[self.point_ids] = self.classes
        return out


def _view_votes(part: PointPixelMap, label_map: LabelMap) -> np.ndarray:
    labels = label_map.values[part.rows, part.cols].astype(np.int64)
    ok = labels != VOID
    return part.point_ids[ok] * 256 + labels[ok]


def collect_votes(
    ppmap: PointPixelMap,
    label_maps: Mapping[int, LabelMap],
    views: Optional[Sequence[CameraView]] = None,
    threads: int = 1,
) -> ViewVotes:
    """One vote per map entry whose pixel carries a non-VOID label."""
    if views is not None:
        for view in views:
            lm = label_maps.get(view.view_id)
            if lm is not None and lm.shape != view.shape:
                raise GeometryMismatch(
                    f"label map for view {view.view_id} is {lm.shape}, view is {view.shape}"
                )
    view_ids = ppmap.view_id_set()
    parts = []
    for v in view_ids:
        if v not in label_maps:
            raise GeometryMismatch(f"no label map for view {v}")
        part = ppmap.view_slice(v)
        lm = label_maps[v]
        if len(part) and (part.rows.max() >= lm.height or part.cols.max() >= lm.width):
            raise GeometryMismatch(f"map entries for view {v} fall outside its {lm.shape} label map")
        parts.append((part, lm))

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            keyed = list(pool.map(lambda a: _view_votes(*a), parts))
    else:
        keyed = [_view_votes(*a) for a in parts]
    # counting is order independent, so the merged tally is thread-count invariant
    keys = np.concatenate(keyed) if keyed else np.zeros(0, dtype=np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    return ViewVotes(uniq // 256, uniq % 256, counts.astype(np.int64))


def aggregate_majority_vote(votes: ViewVotes) -> PredictedLabels:
    """Arg-max class per voted point, lowest class id on ties."""
    p, c, n = votes.point_ids, votes.class_ids, votes.counts
    if p.size == 0:
        return PredictedLabels(np.zeros(0), np.zeros(0), Source.VOTE)
    order = np.lexsort((c, -n, p))
    first = np.ones(order.size, dtype=bool)
    first[1:] = p[order[1:]] != p[order[:-1]]
    win = order[first]
    return PredictedLabels(p[win], c[win], Source.VOTE)


def classify_by_vote(
    ppmap: PointPixelMap,
    label_maps: Mapping[int, LabelMap],
    views: Optional[Sequence[CameraView]] = None,
    threads: int = 1,
) -> PredictedLabels:
    return aggregate_majority_vote(collect_votes(ppmap, label_maps, views, threads))


_INT = re.compile(r"[+-]?[0-9]+")


def parse_predictions(text: str, cloud_size: int, origin: str = "<predictions>") -> PredictedLabels:
    pids, classes = [], []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        if len(tok) != 2 or not (_INT.fullmatch(tok[0]) and _INT.fullmatch(tok[1])):
            raise MalformedPredictionLine(f"{origin}:{lineno}: expected 'point_id class_id', got {line!r}")
        pid, cls = int(tok[0]), int(tok[1])
        if not 0 <= pid < cloud_size:
            raise OutOfRangePointId(f"{origin}:{lineno}: point id {pid} outside [0, {cloud_size})")
        if not 0 <= cls < NUM_CLASSES:
            raise UnknownClassId(f"{origin}:{lineno}: class id {cls} is not in the taxonomy")
        if pid in seen:
            raise DuplicatePointId(f"{origin}:{lineno}: point id {pid} listed twice")
        seen.add(pid)
        pids.append(pid)
        classes.append(cls)
    return PredictedLabels(np.array(pids, dtype=np.int64), np.array(classes, dtype=np.int64), Source.EXTERNAL)


def load_external_predictions(path, cloud_size: int) -> PredictedLabels:
    path = Path(path)
    return parse_predictions(path.read_text(encoding="utf-8"), cloud_size, str(path))


def write_predictions(path, preds: PredictedLabels) -> None:
    Path(path).write_text(
        "".join(f"{p} {c}\n" for p, c in zip(preds.point_ids.tolist(), preds.classes.tolist())),
        encoding="ascii",
    )
