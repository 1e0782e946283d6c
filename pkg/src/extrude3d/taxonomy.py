"""Semantic class taxonomy (KITTI-360 / Cityscapes subset, 15 classes)."""

from __future__ import annotations

from typing import Iterable

from .errors import EmptyTargets, UnknownClassId

VOID = 255

CLASS_NAMES: tuple[str, ...] = (
    "road",
    "sidewalk",
    "building/garage",
    "wall",
    "fence/gate",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "person",
    "car",
    "truck",
    "motorcycle",
    "bicycle",
)

NUM_CLASSES = len(CLASS_NAMES)
CLASS_IDS: tuple[int, ...] = tuple(range(NUM_CLASSES))


def is_class_id(value: int) -> bool:
    return 0 <= value < NUM_CLASSES


def class_name(class_id: int) -> str:
    if isinstance(class_id, bool) or not isinstance(class_id, int) or not is_class_id(class_id):
        raise UnknownClassId(f"class id {class_id!r} is not in the taxonomy 0..{NUM_CLASSES - 1}")
    return CLASS_NAMES[class_id]


def validate_targets(targets: Iterable[int]) -> frozenset[int]:
    """Return ``targets`` as a frozenset after checking membership in the taxonomy."""
    result = frozenset(int(t) for t in targets)
    if not result:
        raise EmptyTargets("target class set is empty")
    for t in result:
        if t == VOID:
            raise UnknownClassId("VOID (255) cannot be a target class")
        class_name(t)
    return result


def parse_targets(text: str) -> frozenset[int]:
    """Parse a comma separated class list such as ``"0,11"``; ``"all"`` selects every class."""
    text = text.strip()
    if text.lower() == "all":
        return frozenset(CLASS_IDS)
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UnknownClassId(f"cannot parse target list {text!r}") from None
    return validate_targets(values)
