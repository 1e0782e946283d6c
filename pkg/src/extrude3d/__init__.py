"""Hybrid 2D-to-3D semantic segmentation reduction.

Project point clouds into camera views with a Z-buffer, extract per-class
pixel sets from 2D label maps, keep only the points whose visible pixels carry
target classes, classify them by multi-view vote and measure IoU, run time and
memory.
"""

from .classify import (
    PredictedLabels,
    Source,
    ViewVotes,
    aggregate_majority_vote,
    collect_votes,
    load_external_predictions,
    write_predictions,
)
from .extrusion import (
    ClassPixelIndex,
    ReductionResult,
    extract_class_pixels,
    read_class_pixel_index,
    reduce_point_subspace,
    write_class_pixel_index,
)
from .labels import LabelMap, inject_label_noise, load_label_map, render_ground_truth_labels, write_label_map
from .mapping import PointPixelMap, build_point_pixel_map, read_map, visible_points, write_map
from .metrics import (
    ConfusionCounts,
    IoUReport,
    RunStats,
    accumulate_confusion,
    bench_stage,
    cross_entropy,
    iou_per_class,
)
from .scene import (
    CameraView,
    PixelCoord,
    PointCloud,
    ViewGeometry,
    Visible,
    cylinder_crop,
    project_point,
    read_calibration,
    read_ply,
    voxel_subsample,
    write_calibration,
    write_ply,
)
from .synth import SceneSpec, class_fraction, generate_scene
from .taxonomy import CLASS_NAMES, NUM_CLASSES, VOID, class_name

__version__ = "0.1.0"
