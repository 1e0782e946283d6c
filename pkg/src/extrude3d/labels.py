"""2D semantic label maps: PGM I/O, ground-truth rendering and noise injection."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadDimensions, BadMagic, MissingLabels, TruncatedData, UnknownClassId
from .mapping import PointPixelMap
from .scene import CameraView, PointCloud
from .taxonomy import NUM_CLASSES, VOID


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Row-major per-pixel class ids, VOID (255) for unlabeled pixels."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise BadDimensions(f"label map must be a non-empty 2D array, got shape {vals.shape}")
        if vals.size and (vals.min() < 0 or vals.max() > 255):
            raise UnknownClassId("label values must be in [0, 255]")
        vals = vals.astype(np.uint8)
        bad = (vals != VOID) & (vals >= NUM_CLASSES)
        if bad.any():
            raise UnknownClassId(f"label map contains ids outside the taxonomy: {sorted(set(vals[bad].tolist()))}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    @classmethod
    def void(cls, height: int, width: int) -> "LabelMap":
        return cls(np.full((height, width), VOID, dtype=np.uint8))


def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping ``#`` comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise TruncatedData("PGM header ends prematurely")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes) -> LabelMap:
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise BadMagic(f"expected PGM magic P5 or P2, got {magic!r}")
    tokens, pos = _pgm_tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise BadDimensions(f"non-integer PGM header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise BadDimensions(f"invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise BadDimensions(f"PGM maxval must be 255, got {maxval}")
    n = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise TruncatedData("missing raster data")
        raster = data[pos + 1 : pos + 1 + n]
        if len(raster) < n:
            raise TruncatedData(f"expected {n} raster bytes, found {len(raster)}")
        values = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    else:
        body = data[pos:].split()
        if len(body) < n:
            raise TruncatedData(f"expected {n} samples, found {len(body)}")
        try:
            values = np.array([int(t) for t in body[:n]], dtype=np.int64).reshape(height, width)
        except ValueError:
            raise TruncatedData("non-integer sample in ASCII PGM") from None
        if values.min() < 0 or values.max() > maxval:
            raise UnknownClassId("PGM sample outside [0, 255]")
    return LabelMap(values)


def load_label_map(path) -> LabelMap:
    return parse_pgm(Path(path).read_bytes())


def write_label_map(path, label_map: LabelMap, ascii: bool = False) -> None:
    h, w = label_map.shape
    if ascii:
        rows = [" ".join(str(v) for v in row) for row in label_map.values.tolist()]
        Path(path).write_bytes(f"P2\n{w} {h}\n255\n".encode() + "\n".join(rows).encode() + b"\n")
    else:
        Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + label_map.values.tobytes())


def render_ground_truth_labels(cloud: PointCloud, view: CameraView, ppmap: PointPixelMap) -> LabelMap:
    """Label each pixel with the class of the point that won it in the Z-buffer."""
    if cloud.labels is None:
        raise MissingLabels("ground-truth rendering needs a labeled cloud")
    values = np.full(view.shape, VOID, dtype=np.uint8)
    part = ppmap.view_slice(view.view_id)
    values[part.rows, part.cols] = cloud.labels[part.point_ids]
    return LabelMap(values)


def inject_label_noise(label_map: LabelMap, flip_rate: float, seed: int) -> LabelMap:
    """Flip each labeled pixel with probability ``flip_rate`` to a different random class."""
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError("flip_rate must be within [0, 1]")
    rng = np.random.default_rng(seed)
    flat = label_map.values.reshape(-1).copy()
    labeled = np.flatnonzero(flat != VOID)
    flip = labeled[rng.random(labeled.size) < flip_rate]
    orig = flat[flip].astype(np.int64)
    # uniform over the other NUM_CLASSES - 1 ids
    repl = rng.integers(0, NUM_CLASSES - 1, size=flip.size)
    repl += repl >= orig
    flat[flip] = repl.astype(np.uint8)
    return LabelMap(flat.reshape(label_map.shape))


def label_map_path(directory, image_name: str) -> Path:
    return Path(directory) / f"{image_name}.pgm"
