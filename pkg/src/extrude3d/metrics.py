"""Accuracy and efficiency metrics.

Accuracy: confusion counts, per-class IoU = TP / (TP + FP + FN), mIoU over
classes with a non-zero denominator, and mean cross-entropy.

Efficiency: wall-clock run time (mean and sample std over the measured runs)
and three resident-memory figures, in MB:

* ``program_mb``  - process RSS before the stage's inputs are loaded;
* ``model_mb``    - RSS growth caused by loading the stage's inputs
  (there is no neural model here, so this measures pipeline inputs);
* ``runtime_mb``  - peak RSS growth above the loaded state during the
  measured runs, sampled every 10 ms.
"""

from __future__ import annotations

import math
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Optional

import numpy as np
import psutil

from .classify import PredictedLabels
from .errors import MissingTruthLabel, StageFailure, UnknownClassId, UnnormalizedDistribution
from .taxonomy import CLASS_NAMES, NUM_CLASSES, VOID, class_name

PROB_FLOOR = 1e-12
MB = 1024.0 * 1024.0


@dataclass(frozen=True, eq=False)
class ConfusionCounts:
    """``matrix[t, p]`` counts points of true class t predicted as p.

    ``unclassified[t]`` counts points of true class t that received no
    prediction; they are false negatives for t and nobody's false positives.
    """

    matrix: np.ndarray
    unclassified: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int = NUM_CLASSES) -> "ConfusionCounts":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), np.zeros(num_classes, dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def fp(self) -> np.ndarray:
        return self.matrix.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.matrix.sum(axis=1) - self.tp + self.unclassified

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.matrix + other.matrix, self.unclassified + other.unclassified)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix) and np.array_equal(self.unclassified, other.unclassified)


def accumulate_confusion(truth, pred: PredictedLabels, eval_point_ids: Iterable[int]) -> ConfusionCounts:
    truth = np.asarray(truth, dtype=np.int64)
    ids = np.unique(np.fromiter(eval_point_ids, dtype=np.int64))
    if ids.size and (ids[0] < 0 or ids[-1] >= truth.size):
        raise MissingTruthLabel("evaluation point id outside the labeled cloud")
    t = truth[ids]
    if np.any((t == VOID) | (t < 0) | (t >= NUM_CLASSES)):
        raise MissingTruthLabel("every evaluated point needs a non-VOID truth label")
    if pred.classes.size and (pred.classes.min() < 0 or pred.classes.max() >= NUM_CLASSES):
        raise UnknownClassId("prediction outside the taxonomy")
    dense = pred.dense(truth.size) if truth.size else np.zeros(0, dtype=np.int64)
    p = dense[ids]
    counts = ConfusionCounts.zeros()
    hit = p != VOID
    np.add.at(counts.matrix, (t[hit], p[hit]), 1)
    np.add.at(counts.unclassified, t[~hit], 1)
    return counts


@dataclass(frozen=True)
class IoUReport:
    iou: tuple  # float per class, None where undefined
    miou: Optional[float]
    tp: tuple
    fp: tuple
    fn: tuple

    @property
    def names(self) -> tuple[str, ...]:
        return CLASS_NAMES[: len(self.iou)]

    def defined(self) -> dict[int, float]:
        return {c: v for c, v in enumerate(self.iou) if v is not None}

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"id": c, "name": self.names[c], "tp": self.tp[c], "fp": self.fp[c], "fn": self.fn[c], "iou": self.iou[c]}
                for c in range(len(self.iou))
            ],
            "miou": self.miou,
        }

    def table(self) -> str:
        """Per-class IoU (%) laid out as one header row and one value row."""
        ids = [str(c) for c in range(len(self.iou))]
        vals = ["-" if v is None else f"{100.0 * v:.2f}" for v in self.iou]
        width = max(6, *(len(v) for v in vals))
        lines = [
            "IoU per class label (%)",
            "  ".join(s.rjust(width) for s in ids) + "  " + "mIoU".rjust(width),
            "  ".join(s.rjust(width) for s in vals)
            + "  "
            + ("-" if self.miou is None else f"{100.0 * self.miou:.2f}").rjust(width),
        ]
        lines.append("")
        lines.extend(f"{c:>2} - {name}" for c, name in enumerate(self.names))
        return "\n".join(lines) + "\n"


def iou_per_class(counts: ConfusionCounts) -> IoUReport:
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    ious = []
    for c in range(counts.num_classes):
        denom = int(tp[c] + fp[c] + fn[c])
        ious.append(int(tp[c]) / denom if denom > 0 else None)
    defined = [v for v in ious if v is not None]
    miou = math.fsum(defined) / len(defined) if defined else None
    return IoUReport(
        tuple(ious), miou, tuple(tp.tolist()), tuple(fp.tolist()), tuple(fn.tolist())
    )


def cross_entropy(truth, probs) -> float:
    """Mean of ``-ln p(truth)`` over points, with p floored at 1e-12."""
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != truth.size:
        raise ValueError("probs must be (num_points, num_classes) matching truth")
    if truth.size == 0:
        raise ValueError("cross-entropy of zero points is undefined")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise UnnormalizedDistribution("each distribution must be non-negative and sum to 1 within 1e-9")
    if np.any((truth == VOID) | (truth < 0) | (truth >= probs.shape[1])):
        raise MissingTruthLabel("truth labels must be valid, non-VOID classes")
    p = np.maximum(probs[np.arange(truth.size), truth], PROB_FLOOR)
    return float(-np.mean(np.log(p)))


# -- efficiency ----------------------------------------------------------------


def rss_bytes() -> int:
    return psutil.Process().memory_info().rss


class RssSampler:
    """Background thread recording the peak RSS every ``interval`` seconds."""

    def __init__(self, interval: float = 0.01):
        self.interval = interval
        self.peak = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._proc = psutil.Process()

    def _sample(self):
        self.peak = max(self.peak, self._proc.memory_info().rss)

    def _loop(self):
        while not self._stop.wait(self.interval):
            self._sample()

    def __enter__(self):
        self._sample()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self._sample()
        return False


@dataclass(frozen=True)
class RunStats:
    run_time_ms_mean: float
    run_time_ms_std: float
    program_mb: float
    model_mb: float
    runtime_mb: float
    runs: int
    warmup: int
    run_times_ms: tuple = field(default=())
    notes: str = "model_mb measures pipeline-input load; no neural model is loaded"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["run_times_ms"] = list(self.run_times_ms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunStats":
        d = dict(d)
        d["run_times_ms"] = tuple(d.get("run_times_ms", ()))
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def bench_stage(load: Callable[[], Callable[[], Any]], runs: int = 5, warmup: int = 2) -> RunStats:
    """Time a stage.

    ``load`` reads the stage's inputs and returns a zero-argument callable that
    performs one run.  The callable executes ``warmup + runs`` times on the
    calling thread; only the last ``runs`` are timed.
    """
    if runs < 1 or warmup < 0:
        raise ValueError("runs must be >= 1 and warmup >= 0")
    program = rss_bytes()
    try:
        stage = load()
    except Exception as exc:
        raise StageFailure(f"stage input loading failed: {exc}") from exc
    loaded = rss_bytes()
    times = []
    try:
        with RssSampler() as sampler:
            for i in range(warmup + runs):
                t0 = time.perf_counter()
                stage()
                elapsed = (time.perf_counter() - t0) * 1e3
                if i >= warmup:
                    times.append(elapsed)
    except Exception as exc:
        raise StageFailure(f"stage run failed: {exc}") from exc
    return RunStats(
        run_time_ms_mean=statistics.fmean(times),
        run_time_ms_std=statistics.stdev(times) if runs > 1 else 0.0,
        program_mb=program / MB,
        model_mb=max(0, loaded - program) / MB,
        runtime_mb=max(0, sampler.peak - loaded) / MB,
        runs=runs,
        warmup=warmup,
        run_times_ms=tuple(times),
    )


def compare_to_baseline(current: RunStats, baseline: RunStats) -> dict:
    """Speed-up (baseline / current mean time) and memory reductions in percent."""

    def reduction(base: float, cur: float) -> Optional[float]:
        return None if base <= 0 else 100.0 * (base - cur) / base

    return {
        "speedup": baseline.run_time_ms_mean / current.run_time_ms_mean if current.run_time_ms_mean > 0 else None,
        "model_memory_reduction_pct": reduction(baseline.model_mb, current.model_mb),
        "runtime_memory_reduction_pct": reduction(baseline.runtime_mb, current.runtime_mb),
        "program_memory_reduction_pct": reduction(baseline.program_mb, current.program_mb),
    }


__all__ = [
    "ConfusionCounts",
    "IoUReport",
    "RunStats",
    "accumulate_confusion",
    "iou_per_class",
    "class_name",
    "cross_entropy",
    "bench_stage",
    "compare_to_baseline",
]
