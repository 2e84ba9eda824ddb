"""Placement prediction and spatial-quality metrics.

Collision flags:

* ``out_of_bounds``: the box leaves ``[0, W] x [0, H]`` by more than
  ``oob`` pixels.
* ``overlaps_object``: the box covers more than ``overlap`` of the area of
  some existing object mask.
* ``occludes_important``: the box covers more than ``occlusion`` of the area
  of some mask tagged ``important``.

Coverage is the exact area of the box intersected with the mask's pixel
squares, so enlarging a box can never lower it.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from scenefit.backends.base import DetectorBackend, VlmBackend
from scenefit.errors import DetectorFailure, EmptyInput, LengthMismatch, UnknownCategory, UnparseableRating
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import (
    BinaryMask,
    CategoryTaxonomy,
    DatasetRecordA,
    PlacementBox,
    SceneImage,
    draw_box,
)

IMPORTANT_TAG = "important"
OVERLAPS_OBJECT = "overlaps_object"
OCCLUDES_IMPORTANT = "occludes_important"
OUT_OF_BOUNDS = "out_of_bounds"


@dataclass(frozen=True)
class CollisionThresholds:
    oob: float = 0.0
    overlap: float = 0.25
    occlusion: float = 0.10


@dataclass(frozen=True)
class CollisionResult:
    flags: frozenset[str]
    overlap_ratio: float
    important_ratio: float

    @property
    def collision_score_contrib(self) -> int:
        return int(bool(self.flags))


@dataclass(frozen=True)
class PlacementAssessment:
    iou: float | None
    context_score: float | None
    collision_flags: frozenset[str]
    collision_score_contrib: int

    def __post_init__(self) -> None:
        if self.collision_score_contrib != int(bool(self.collision_flags)):
            raise ValueError("collision_score_contrib must be 1 exactly when flags are present")

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "context_score": self.context_score,
            "collision_flags": sorted(self.collision_flags),
            "collision_score_contrib": self.collision_score_contrib,
        }


# -----------------------------------------------------------------------------
# IoU
# -----------------------------------------------------------------------------


def iou(a: PlacementBox, b: PlacementBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def mean_iou(pairs: Iterable[tuple[PlacementBox, PlacementBox]]) -> float:
    values = [iou(p, g) for p, g in pairs]
    if not values:
        raise EmptyInput("mean IoU over zero pairs")
    return float(np.mean(values))


def per_category_iou(records: Sequence[DatasetRecordA], preds: Sequence[PlacementBox]) -> dict[str, float]:
    """Mean IoU keyed by each record's canonical (first) category."""
    if len(records) != len(preds):
        raise LengthMismatch(f"{len(records)} records vs {len(preds)} predictions")
    groups: dict[str, list[float]] = defaultdict(list)
    for rec, pred in zip(records, preds):
        groups[rec.canonical_category].append(iou(pred, rec.gt_box))
    return {cat: float(np.mean(v)) for cat, v in sorted(groups.items())}


# -----------------------------------------------------------------------------
# Collision / occlusion
# -----------------------------------------------------------------------------


def pixel_coverage(box: PlacementBox, width: int, height: int) -> np.ndarray:
    """Area of each unit pixel square covered by the box, shape (H, W)."""
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    cx = np.clip(np.minimum(xs + 1, box.x_max) - np.maximum(xs, box.x_min), 0.0, 1.0)
    cy = np.clip(np.minimum(ys + 1, box.y_max) - np.maximum(ys, box.y_min), 0.0, 1.0)
    return np.outer(cy, cx)


def mask_coverage(box: PlacementBox, mask: BinaryMask) -> float:
    """Fraction of the mask's area lying inside the box."""
    area = mask.area
    if area == 0:
        return 0.0
    return float((pixel_coverage(box, mask.width, mask.height) * mask.bits).sum() / area)


def collision_score(
    box: PlacementBox, image: SceneImage, thresholds: CollisionThresholds = CollisionThresholds()
) -> CollisionResult:
    flags = set()
    t = thresholds.oob
    if box.x_min < -t or box.y_min < -t or box.x_max > image.width + t or box.y_max > image.height + t:
        flags.add(OUT_OF_BOUNDS)
    overlap = max((mask_coverage(box, m) for m in image.object_masks), default=0.0)
    important = max(
        (mask_coverage(box, m) for m in image.object_masks if IMPORTANT_TAG in m.tags), default=0.0
    )
    if overlap > thresholds.overlap:
        flags.add(OVERLAPS_OBJECT)
    if important > thresholds.occlusion:
        flags.add(OCCLUDES_IMPORTANT)
    return CollisionResult(frozenset(flags), overlap, important)


def dataset_collision_rate(assessments: Sequence) -> float:
    """Fraction of assessments with at least one collision flag."""
    if not assessments:
        raise EmptyInput("collision rate over zero assessments")
    return sum(a.collision_score_contrib for a in assessments) / len(assessments)


# -----------------------------------------------------------------------------
# VLM-rated plausibility
# -----------------------------------------------------------------------------

_RATING_RE = re.compile(r"^(\d{1,2})(?:\s*/\s*10)?$")


def parse_rating(text: str, scale: int = 10) -> float:
    """Parse a ``0..scale`` integer rating (optionally ``n/10``) into [0, 1].

    Raises:
        UnparseableRating: anything but digits, or a value above ``scale``.
    """
    cleaned = text.strip().strip("\"'`*. ")
    m = _RATING_RE.match(cleaned)
    if not m or int(m.group(1)) > scale:
        raise UnparseableRating(f"expected an integer 0-{scale}, got {text!r}")
    return int(m.group(1)) / scale


def contextual_plausibility(
    image: SceneImage,
    box: PlacementBox,
    category: str,
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
) -> float:
    prompt = (templates or load_templates()).render("placement_rating", category=category)
    return parse_rating(vlm.answer(draw_box(image, box), prompt))


# -----------------------------------------------------------------------------
# Prediction
# -----------------------------------------------------------------------------


def predict_placement(
    image: SceneImage,
    category: str,
    detector: DetectorBackend,
    taxonomy: CategoryTaxonomy | None = None,
) -> tuple[PlacementBox, float]:
    """Top-1 category-conditioned box from the detector, unclamped.

    Raises:
        UnknownCategory: ``category`` is not in ``taxonomy``.
        DetectorFailure: the detector errored or returned an invalid box or
            confidence.
    """
    if taxonomy is not None and category not in taxonomy:
        raise UnknownCategory(category)
    try:
        raw_box, confidence = detector.predict_box(image, category)
    except DetectorFailure:
        raise
    except Exception as exc:
        raise DetectorFailure(f"detector error: {exc}") from exc
    try:
        box = raw_box if isinstance(raw_box, PlacementBox) else PlacementBox(*raw_box)
    except (TypeError, ValueError) as exc:
        raise DetectorFailure(f"invalid box from detector: {exc}") from exc
    confidence = float(confidence)
    if not 0.0 <= confidence <= 1.0:
        raise DetectorFailure(f"confidence {confidence} outside [0, 1]")
    return box, confidence


def assess_placement(
    image: SceneImage,
    pred: PlacementBox,
    gt: PlacementBox | None,
    category: str | None = None,
    vlm: VlmBackend | None = None,
    thresholds: CollisionThresholds = CollisionThresholds(),
    templates: TemplateSet | None = None,
) -> PlacementAssessment:
    collision = collision_score(pred, image, thresholds)
    context = None
    if vlm is not None and category is not None:
        context = contextual_plausibility(image, pred, category, vlm, templates)
    return PlacementAssessment(
        iou=iou(pred, gt) if gt is not None else None,
        context_score=context,
        collision_flags=collision.flags,
        collision_score_contrib=collision.collision_score_contrib,
    )


def write_assessments(path: Union[str, Path], rows: Iterable[tuple[str, PlacementAssessment]]) -> None:
    """One JSON record per line: ``{"image_id": ..., **assessment}``."""
    lines = []
    for image_id, a in rows:
        data = {"image_id": image_id, **a.to_dict()}
        lines.append(json.dumps(data, sort_keys=True))
    Path(path).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def read_assessments(path: Union[str, Path]) -> list[tuple[str, PlacementAssessment]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        d: Mapping = json.loads(line)
        rows.append(
            (
                d["image_id"],
                PlacementAssessment(
                    d["iou"], d["context_score"], frozenset(d["collision_flags"]), d["collision_score_contrib"]
                ),
            )
        )
    return rows
