"""Command line driver.

Every stage reads and writes plain files, so stages can be run one by one or
chained with ``pipeline``::

    extrude3d synth --preset street --seed 1 --out run/
    extrude3d map --cloud run/cloud.ply --calib run/calib.txt --out run/map.txt
    extrude3d render-gt --cloud run/cloud.ply --calib run/calib.txt --map run/map.txt --out run/labels
    extrude3d extrude --labels run/labels --targets 0,11 --out run/index
    extrude3d reduce --map run/map.txt --calib run/calib.txt --index run/index --targets 0,11 \\
        --out run/reduced_map.txt --ids run/retained_ids.txt
    extrude3d classify --map run/reduced_map.txt --calib run/calib.txt --labels run/labels --out run/predictions.txt
    extrude3d eval --cloud run/cloud.ply --predictions run/predictions.txt --eval-ids run/retained_ids.txt --out run/report.json

Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import classify as cls_mod
from . import extrusion, labels, mapping, metrics, scene, synth
from .errors import (
    DataError,
    Extrude3DError,
    GeometryMismatch,
    MissingLabels,
    OutOfRangePointId,
    StageFailure,
)
from .taxonomy import VOID, parse_targets

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "EXTRUDE3D_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Artifacts:
    """Tracks files and directories created by a command so a failure can remove them."""

    def __init__(self):
        self._files: list[Path] = []
        self._dirs: list[Path] = []

    def file(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            self._files.append(path)
        self.dir(path.parent)
        return path

    def dir(self, path) -> Path:
        path = Path(path)
        missing = []
        p = path
        while not p.exists():
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self._dirs.extend(reversed(missing))
        return path

    def rollback(self):
        for f in reversed(self._files):
            f.unlink(missing_ok=True)
        for d in reversed(self._dirs):
            shutil.rmtree(d, ignore_errors=True)


# -- configuration -------------------------------------------------------------


@dataclass
class PipelineConfig:
    out: Optional[str] = None
    cloud: Optional[str] = None
    calib: Optional[str] = None
    labels: Optional[str] = None
    predictions: Optional[str] = None
    scene_spec: Optional[str] = None
    preset: Optional[str] = None
    points: int = 20_000
    views: int = 4
    height: int = 48
    width: int = 64
    target_fraction: float = 0.1
    mode: str = "reduced"
    targets: list = dataclasses.field(default_factory=lambda: [0])
    voxel_size: Optional[float] = 0.05
    crop_center: Optional[list] = None
    crop_radius: Optional[float] = None
    depth_epsilon: float = mapping.DEFAULT_DEPTH_EPSILON
    noise: float = 0.0
    seed: int = 0
    runs: int = 5
    warmup: int = 2
    bench: bool = False

    def validate(self):
        if self.mode not in ("full", "reduced"):
            raise UsageError(f"mode must be 'full' or 'reduced', got {self.mode!r}")
        self.targets = sorted(parse_targets(",".join(str(t) for t in self.targets)))
        if self.voxel_size is not None and not self.voxel_size > 0:
            raise UsageError("voxel_size must be positive (omit it to disable subsampling)")
        if (self.crop_center is None) != (self.crop_radius is None):
            raise UsageError("crop_center and crop_radius must be given together")
        if self.crop_radius is not None and not self.crop_radius > 0:
            raise UsageError("crop_radius must be positive")
        if self.runs < 1 or self.warmup < 0:
            raise UsageError("runs must be >= 1 and warmup >= 0")
        if not 0.0 <= self.noise <= 1.0:
            raise UsageError("noise must be within [0, 1]")
        if self.depth_epsilon < 0:
            raise UsageError("depth_epsilon must be >= 0")
        if self.out is None:
            raise UsageError("an output directory is required")
        if self.cloud is None and self.scene_spec is None and self.preset is None:
            raise UsageError("give --cloud/--calib, --scene-spec or --preset")
        if self.cloud is not None and self.calib is None:
            raise UsageError("--cloud requires --calib")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def dump(self, path):
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n", encoding="utf-8")


# -- shared helpers --------------------------------------------------------------


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_label_maps(directory, views: Sequence[scene.CameraView]) -> dict[int, labels.LabelMap]:
    out = {}
    for view in views:
        path = labels.label_map_path(directory, view.image_name)
        if not path.exists():
            raise DataError(f"missing label map {path} for view {view.view_id}")
        lm = labels.load_label_map(path)
        if lm.shape != view.shape:
            raise GeometryMismatch(f"{path}: label map is {lm.shape}, view {view.view_id} is {view.shape}")
        out[view.view_id] = lm
    return out


def load_indexes(directory, views: Sequence[scene.CameraView]) -> dict[int, extrusion.ClassPixelIndex]:
    out = {}
    for view in views:
        path = extrusion.index_path(directory, view.image_name)
        if path.exists():
            out[view.view_id] = extrusion.read_class_pixel_index(path, view.shape)
    return out


def build_report(
    cloud: scene.PointCloud,
    preds: cls_mod.PredictedLabels,
    eval_ids: np.ndarray,
    scope: str,
    mode: Optional[str] = None,
    targets: Optional[Sequence[int]] = None,
    votes: Optional[cls_mod.ViewVotes] = None,
) -> dict:
    if cloud.labels is None:
        raise MissingLabels("evaluation needs a labeled cloud")
    counts = metrics.accumulate_confusion(cloud.labels, preds, eval_ids)
    iou = metrics.iou_per_class(counts)
    ce, ce_points = None, 0
    if votes is not None and len(votes.point_ids):
        pts, probs = votes.distributions()
        keep = np.isin(pts, eval_ids)
        if keep.any():
            ce = metrics.cross_entropy(cloud.labels[pts[keep]], probs[keep])
            ce_points = int(keep.sum())
    report = {
        "mode": mode,
        "targets": None if targets is None else [int(t) for t in targets],
        "eval_scope": scope,
        "eval_points": int(len(eval_ids)),
        "predictions_source": preds.source.value,
        "classified_points": int(np.isin(preds.point_ids, eval_ids).sum()),
    }
    report.update(iou.to_dict())
    report["cross_entropy"] = ce
    report["cross_entropy_points"] = ce_points
    return report


def report_table(report: dict) -> str:
    iou = metrics.IoUReport(
        tuple(c["iou"] for c in report["classes"]),
        report["miou"],
        tuple(c["tp"] for c in report["classes"]),
        tuple(c["fp"] for c in report["classes"]),
        tuple(c["fn"] for c in report["classes"]),
    )
    head = f"mode: {report['mode']}  targets: {report['targets']}  scope: {report['eval_scope']} ({report['eval_points']} points)\n"
    return head + iou.table()


# -- commands ------------------------------------------------------------------


def _scene_spec_from_args(args) -> synth.SceneSpec:
    if args.scene_spec:
        return synth.load_scene_spec(args.scene_spec)
    if args.preset == "street":
        return synth.street_scene_spec(args.seed, args.points, args.views, args.height, args.width)
    if args.preset == "coverage":
        return synth.coverage_scene_spec(args.points, args.target_class, args.target_fraction, args.seed)
    raise UsageError("give --scene-spec or --preset")


def write_scene(art: Artifacts, out: Path, spec: synth.SceneSpec, depth_epsilon: float, threads: int):
    cloud, views = synth.generate_scene(spec)
    art.dir(out)
    synth.save_scene_spec(art.file(out / "scene.json"), spec)
    scene.write_ply(art.file(out / "cloud.ply"), cloud)
    scene.write_calibration(art.file(out / "calib.txt"), views)
    ppmap = mapping.build_point_pixel_map(cloud, views, depth_epsilon, threads)
    gt = art.dir(out / "gt")
    for view in views:
        lm = labels.render_ground_truth_labels(cloud, view, ppmap)
        labels.write_label_map(art.file(labels.label_map_path(gt, view.image_name)), lm)
    return cloud, views


def cmd_synth(args, art: Artifacts) -> int:
    write_scene(art, Path(args.out), _scene_spec_from_args(args), args.depth_epsilon, _threads(args))
    return EXIT_OK


def preprocess_cloud(cloud, voxel_size, crop_center, crop_radius):
    index = np.arange(len(cloud))
    if crop_radius is not None:
        cloud, keep = scene.cylinder_crop(cloud, crop_center, crop_radius)
        index = index[keep]
    if voxel_size is not None:
        cloud, keep = scene.voxel_subsample(cloud, voxel_size)
        index = index[keep]
    return cloud, index


def cmd_preprocess(args, art: Artifacts) -> int:
    cloud = scene.read_ply(args.cloud)
    center = _parse_xy(args.crop_center) if args.crop_center else None
    voxel = None if args.no_subsample else args.voxel_size
    out, index = preprocess_cloud(cloud, voxel, center, args.crop_radius)
    scene.write_ply(art.file(args.out), out)
    if args.index_out:
        extrusion.write_retained_ids(art.file(args.index_out), index)
    return EXIT_OK


def cmd_map(args, art: Artifacts) -> int:
    cloud = scene.read_ply(args.cloud)
    views = scene.read_calibration(args.calib)
    ppmap = mapping.build_point_pixel_map(cloud, views, args.depth_epsilon, _threads(args))
    mapping.write_map(art.file(args.out), ppmap)
    return EXIT_OK


def cmd_render_gt(args, art: Artifacts) -> int:
    cloud = scene.read_ply(args.cloud)
    views = scene.read_calibration(args.calib)
    ppmap = mapping.read_map(args.map)
    _render_labels(art, Path(args.out), cloud, views, ppmap, args.noise, args.seed)
    return EXIT_OK


def _render_labels(art, out: Path, cloud, views, ppmap, noise: float, seed: int) -> dict:
    art.dir(out)
    maps = {}
    for view in views:
        lm = labels.render_ground_truth_labels(cloud, view, ppmap)
        if noise > 0:
            lm = labels.inject_label_noise(lm, noise, seed + view.view_id)
        labels.write_label_map(art.file(labels.label_map_path(out, view.image_name)), lm)
        maps[view.view_id] = lm
    return maps


def cmd_extrude(args, art: Artifacts) -> int:
    targets = parse_targets(args.targets)
    src = Path(args.labels)
    if args.calib:
        names = [v.image_name for v in scene.read_calibration(args.calib)]
        paths = [labels.label_map_path(src, n) for n in names]
    else:
        paths = sorted(src.glob("*.pgm"))
    out = art.dir(args.out)
    for path in paths:
        index = extrusion.extract_class_pixels(labels.load_label_map(path), targets, path.stem)
        art.file(extrusion.index_path(out, index.image_name))
        extrusion.write_class_pixel_index(index, out)
    return EXIT_OK


def cmd_reduce(args, art: Artifacts) -> int:
    targets = parse_targets(args.targets)
    views = scene.read_calibration(args.calib)
    ppmap = mapping.read_map(args.map)
    indexes = load_indexes(args.index, views)
    result = extrusion.reduce_point_subspace(ppmap, indexes, targets, _threads(args))
    mapping.write_map(art.file(args.out), result.reduced_map)
    extrusion.write_retained_ids(art.file(args.ids), result.retained_point_ids)
    return EXIT_OK


def cmd_classify(args, art: Artifacts) -> int:
    if args.external:
        if not args.cloud:
            raise UsageError("--external requires --cloud to validate point ids")
        preds = cls_mod.load_external_predictions(args.external, len(scene.read_ply(args.cloud)))
    else:
        if not (args.map and args.labels and args.calib):
            raise UsageError("vote classification needs --map, --labels and --calib")
        views = scene.read_calibration(args.calib)
        ppmap = mapping.read_map(args.map)
        maps = load_label_maps(args.labels, views)
        preds = cls_mod.classify_by_vote(ppmap, maps, views, _threads(args))
    cls_mod.write_predictions(art.file(args.out), preds)
    return EXIT_OK


def cmd_eval(args, art: Artifacts) -> int:
    cloud = scene.read_ply(args.cloud)
    source = cls_mod.Source.EXTERNAL if args.external else cls_mod.Source.VOTE
    preds = cls_mod.load_external_predictions(args.predictions, len(cloud))
    preds = cls_mod.PredictedLabels(preds.point_ids, preds.classes, source)
    ppmap = mapping.read_map(args.map) if args.map else None
    if args.eval_ids:
        eval_ids, scope = extrusion.read_retained_ids(args.eval_ids), args.scope or "ids"
        if eval_ids.size and (eval_ids.min() < 0 or eval_ids.max() >= len(cloud)):
            raise OutOfRangePointId(f"{args.eval_ids}: point id outside the cloud")
    elif ppmap is not None:
        eval_ids, scope = mapping.all_visible_points(ppmap), args.scope or "visible"
    else:
        if cloud.labels is None:
            raise MissingLabels("evaluation needs a labeled cloud")
        eval_ids, scope = np.flatnonzero(cloud.labels != VOID), args.scope or "all"
    votes = None
    if args.labels:
        if ppmap is None or not args.calib:
            raise UsageError("--labels (for cross-entropy) needs --map and --calib")
        views = scene.read_calibration(args.calib)
        votes = cls_mod.collect_votes(ppmap, load_label_maps(args.labels, views), views, _threads(args))
    targets = sorted(parse_targets(args.targets)) if args.targets else None
    report = build_report(cloud, preds, eval_ids, scope, args.mode, targets, votes)
    _write_json(art.file(args.out), report)
    if args.table:
        Path(art.file(args.table)).write_text(report_table(report), encoding="utf-8")
    return EXIT_OK


def _bench_loader(mode: str, stage: str, cloud_path, calib_path, labels_dir, targets, depth_epsilon, threads):
    """Return ``(load, entry_count_fn)`` for :func:`metrics.bench_stage`."""
    info = {}

    def load():
        cloud = scene.read_ply(cloud_path)
        views = scene.read_calibration(calib_path)
        maps = load_label_maps(labels_dir, views)

        def reduce_map(ppmap):
            if mode == "full":
                return ppmap
            idx = {
                v.view_id: extrusion.extract_class_pixels(maps[v.view_id], targets, v.image_name) for v in views
            }
            return extrusion.reduce_point_subspace(ppmap, idx, targets, threads).reduced_map

        if stage == "classify":
            ppmap = reduce_map(mapping.build_point_pixel_map(cloud, views, depth_epsilon, threads))
            info["entries"] = len(ppmap)

            def run():
                return cls_mod.classify_by_vote(ppmap, maps, views, threads)
        else:

            def run():
                ppmap = reduce_map(mapping.build_point_pixel_map(cloud, views, depth_epsilon, threads))
                info["entries"] = len(ppmap)
                return cls_mod.classify_by_vote(ppmap, maps, views, threads)

        return run

    return load, info


def cmd_bench(args, art: Artifacts) -> int:
    targets = parse_targets(args.targets)
    load, info = _bench_loader(
        args.mode, args.stage, args.cloud, args.calib, args.labels, targets, args.depth_epsilon, _threads(args)
    )
    stats = metrics.bench_stage(load, args.runs, args.warmup)
    result = {
        "mode": args.mode,
        "stage": args.stage,
        "targets": sorted(targets),
        "entries": info.get("entries"),
        "run_stats": stats.to_dict(),
    }
    if args.baseline:
        try:
            base = json.loads(Path(args.baseline).read_text(encoding="utf-8"))
            base_stats = metrics.RunStats.from_dict(base["run_stats"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"cannot read baseline {args.baseline}: {exc}") from None
        result["baseline"] = {"mode": base.get("mode"), "entries": base.get("entries")}
        result["comparison"] = metrics.compare_to_baseline(stats, base_stats)
    _write_json(art.file(args.out), result)
    return EXIT_OK


def run_pipeline(cfg: PipelineConfig, threads: int, art: Artifacts) -> dict:
    """Run every stage, writing each intermediate artifact under ``cfg.out``."""
    out = art.dir(cfg.out)
    targets = cfg.targets

    if cfg.cloud is None:
        spec = (
            synth.load_scene_spec(cfg.scene_spec)
            if cfg.scene_spec
            else synth.street_scene_spec(cfg.seed, cfg.points, cfg.views, cfg.height, cfg.width)
            if cfg.preset == "street"
            else synth.coverage_scene_spec(cfg.points, targets[0], cfg.target_fraction, cfg.seed)
            if cfg.preset == "coverage"
            else None
        )
        if spec is None:
            raise UsageError(f"unknown preset {cfg.preset!r}")
        raw, views = synth.generate_scene(spec)
        synth.save_scene_spec(art.file(out / "scene.json"), spec)
        scene.write_ply(art.file(out / "cloud.ply"), raw)
        scene.write_calibration(art.file(out / "calib.txt"), views)
    else:
        raw = scene.read_ply(cfg.cloud)
        views = scene.read_calibration(cfg.calib)

    cloud, pre_index = preprocess_cloud(
        raw, cfg.voxel_size, cfg.crop_center, cfg.crop_radius
    )
    scene.write_ply(art.file(out / "cloud_pre.ply"), cloud)
    extrusion.write_retained_ids(art.file(out / "preprocess_index.txt"), pre_index)

    ppmap = mapping.build_point_pixel_map(cloud, views, cfg.depth_epsilon, threads)
    mapping.write_map(art.file(out / "map.txt"), ppmap)

    if cfg.labels:
        maps = load_label_maps(cfg.labels, views)
    else:
        maps = _render_labels(art, out / "labels", cloud, views, ppmap, cfg.noise, cfg.seed)

    if cfg.mode == "reduced":
        index_dir = art.dir(out / "index")
        indexes = {}
        for view in views:
            index = extrusion.extract_class_pixels(maps[view.view_id], targets, view.image_name)
            art.file(extrusion.index_path(index_dir, view.image_name))
            extrusion.write_class_pixel_index(index, index_dir)
            # reload so downstream stages see exactly what was persisted
            indexes[view.view_id] = extrusion.read_class_pixel_index(
                extrusion.index_path(index_dir, view.image_name), view.shape
            )
        result = extrusion.reduce_point_subspace(ppmap, indexes, targets, threads)
        work_map = result.reduced_map
        eval_ids, scope = result.retained_point_ids, "retained"
        mapping.write_map(art.file(out / "reduced_map.txt"), work_map)
        extrusion.write_retained_ids(art.file(out / "retained_ids.txt"), eval_ids)
    else:
        work_map = ppmap
        eval_ids, scope = mapping.all_visible_points(ppmap), "visible"

    votes = cls_mod.collect_votes(work_map, maps, views, threads)
    if cfg.predictions:
        preds = cls_mod.load_external_predictions(cfg.predictions, len(cloud))
    else:
        preds = cls_mod.aggregate_majority_vote(votes)
    cls_mod.write_predictions(art.file(out / "predictions.txt"), preds)

    report = build_report(cloud, preds, eval_ids, scope, cfg.mode, targets, votes)
    _write_json(art.file(out / "report.json"), report)
    art.file(out / "report.txt").write_text(report_table(report), encoding="utf-8")

    if cfg.bench:
        labels_dir = cfg.labels or str(out / "labels")
        load, info = _bench_loader(
            cfg.mode, "classify", out / "cloud_pre.ply", cfg.calib or out / "calib.txt", labels_dir,
            targets, cfg.depth_epsilon, threads,
        )
        stats = metrics.bench_stage(load, cfg.runs, cfg.warmup)
        _write_json(
            art.file(out / "bench.json"),
            {"mode": cfg.mode, "stage": "classify", "targets": targets, "entries": info.get("entries"),
             "run_stats": stats.to_dict()},
        )
    return report


_CONFIG_FLAGS = {
    "out": "out", "cloud": "cloud", "calib": "calib", "labels": "labels", "predictions": "predictions",
    "scene_spec": "scene_spec", "preset": "preset", "points": "points", "views": "views", "height": "height",
    "width": "width", "target_fraction": "target_fraction", "mode": "mode", "voxel_size": "voxel_size",
    "crop_radius": "crop_radius", "depth_epsilon": "depth_epsilon", "noise": "noise", "seed": "seed",
    "runs": "runs", "warmup": "warmup",
}


def cmd_pipeline(args, art: Artifacts) -> int:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for attr, field in _CONFIG_FLAGS.items():
        value = getattr(args, attr)
        if value is not None:
            setattr(cfg, field, value)
    if args.targets is not None:
        cfg.targets = sorted(parse_targets(args.targets))
    if args.crop_center is not None:
        cfg.crop_center = list(_parse_xy(args.crop_center))
    if args.no_subsample:
        cfg.voxel_size = None
    if args.bench:
        cfg.bench = True
    cfg.validate()
    if args.dump_config:
        cfg.dump(args.dump_config)
    run_pipeline(cfg, _threads(args), art)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _parse_xy(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = text.split(",")
    try:
        x, y = (float(v) for v in vals)
    except ValueError:
        raise UsageError(f"expected 'x,y', got {text!r}") from None
    return x, y


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1); results do not depend on it")

    parser = _Parser(prog="extrude3d", description="2D-to-3D label extrusion pipeline for point cloud segmentation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    eps = dict(type=float, default=mapping.DEFAULT_DEPTH_EPSILON, help="Z-buffer depth tie tolerance (m)")

    p = add("synth", cmd_synth, "generate a synthetic labeled scene (PLY, calibration, ground-truth PGMs)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scene-spec", help="scene spec JSON")
    g.add_argument("--preset", choices=["street", "coverage"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=20_000)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--target-class", type=int, default=0, help="coverage preset: class of the target strip")
    p.add_argument("--target-fraction", type=float, default=0.1, help="coverage preset: target area fraction")
    p.add_argument("--depth-epsilon", **eps)
    p.add_argument("--out", required=True)

    p = add("preprocess", cmd_preprocess, "cylindrical crop and voxel subsampling")
    p.add_argument("--cloud", required=True)
    p.add_argument("--voxel-size", type=float, default=0.05)
    p.add_argument("--no-subsample", action="store_true")
    p.add_argument("--crop-center", help="x,y")
    p.add_argument("--crop-radius", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--index-out", help="write original indices of kept points")

    p = add("map", cmd_map, "build the Z-buffered point-pixel map")
    p.add_argument("--cloud", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--depth-epsilon", **eps)
    p.add_argument("--out", required=True)

    p = add("render-gt", cmd_render_gt, "render ground-truth label maps from a labeled cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="label flip rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("extrude", cmd_extrude, "extract per-class pixel lists from label maps into JSON")
    p.add_argument("--labels", required=True, help="directory of <image_name>.pgm")
    p.add_argument("--calib", help="restrict to the views of this calibration")
    p.add_argument("--targets", default="all")
    p.add_argument("--out", required=True)

    p = add("reduce", cmd_reduce, "keep map entries whose pixel carries a target class")
    p.add_argument("--map", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--index", required=True, help="directory of <image_name>.json")
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True, help="reduced map")
    p.add_argument("--ids", required=True, help="retained point ids")

    p = add("classify", cmd_classify, "majority-vote classification or external prediction ingestion")
    p.add_argument("--map")
    p.add_argument("--calib")
    p.add_argument("--labels")
    p.add_argument("--external", help="predictions file 'point_id class_id' per line")
    p.add_argument("--cloud", help="cloud used to validate external point ids")
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "IoU report")
    p.add_argument("--cloud", required=True, help="labeled cloud")
    p.add_argument("--predictions", required=True)
    p.add_argument("--external", action="store_true", help="mark predictions as externally produced")
    p.add_argument("--eval-ids", help="restrict evaluation to these point ids")
    p.add_argument("--map", help="evaluate visible points of this map; also used for cross-entropy")
    p.add_argument("--labels", help="label maps for vote-based cross-entropy")
    p.add_argument("--calib")
    p.add_argument("--scope", help="scope name recorded in the report")
    p.add_argument("--mode", choices=["full", "reduced"])
    p.add_argument("--targets")
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="also write the plain-text IoU table")

    p = add("bench", cmd_bench, "time and memory statistics for a pipeline stage")
    p.add_argument("--mode", choices=["full", "reduced"], required=True)
    p.add_argument("--stage", choices=["classify", "end-to-end"], default="classify")
    p.add_argument("--cloud", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--targets", default="0")
    p.add_argument("--depth-epsilon", **eps)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--baseline", help="bench JSON of the baseline run")
    p.add_argument("--out", required=True)

    p = add("pipeline", cmd_pipeline, "run all stages end to end")
    p.add_argument("--config", help="PipelineConfig JSON; flags override it")
    p.add_argument("--dump-config", help="write the resolved config JSON here")
    p.add_argument("--out")
    p.add_argument("--mode", choices=["full", "reduced"])
    p.add_argument("--targets")
    p.add_argument("--cloud")
    p.add_argument("--calib")
    p.add_argument("--labels", help="directory of label maps (default: render ground truth)")
    p.add_argument("--predictions", help="external predictions instead of voting")
    p.add_argument("--scene-spec")
    p.add_argument("--preset", choices=["street", "coverage"])
    p.add_argument("--points", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--target-fraction", type=float)
    p.add_argument("--voxel-size", type=float)
    p.add_argument("--no-subsample", action="store_true")
    p.add_argument("--crop-center", help="x,y")
    p.add_argument("--crop-radius", type=float)
    p.add_argument("--depth-epsilon", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--bench", action="store_true", help="also write bench.json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    art = Artifacts()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, art)
    except UsageError as exc:
        art.rollback()
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as exc:
        art.rollback()
        cause = exc.__cause__
        code = EXIT_DATA if isinstance(cause, (DataError, OSError, ValueError)) else EXIT_INTERNAL
        print(f"extrude3d: {type(cause).__name__ if cause else 'StageFailure'}: {exc}", file=sys.stderr)
        return code
    except (DataError, OSError, ValueError) as exc:
        art.rollback()
        print(f"extrude3d: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Extrude3DError as exc:
        art.rollback()
        print(f"extrude3d: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SystemExit as exc:
        # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except Exception as exc:  # noqa: BLE001
        art.rollback()
        print(f"extrude3d: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
