"""Classification, diversity, realism and sponsor metrics.

Everything here is a pure function of its inputs. Human ratings are only
ever read from annotation files, never estimated.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from scenefit.backends.base import EmbedderBackend, VlmBackend, cosine_similarity
from scenefit.errors import (
    EmptyMatrix,
    EmptyRun,
    LengthMismatch,
    MalformedAnnotationFile,
    MisalignedInputs,
    UnknownCategory,
)
from scenefit.placement import parse_rating
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import BinaryMask, CategoryTaxonomy, DatasetRecordA, DatasetRecordB, SceneImage, Variant

NO_PREDICTION = "<none>"
HUMAN_SCALE = (1, 5)


class ZeroSupportWarning(UserWarning):
    """A class with no true examples was left out of a per-class average."""


# -----------------------------------------------------------------------------
# Confusion matrices
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix; rows are true labels, columns predictions."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        n = len(self.labels)
        if len(set(self.labels)) != n:
            raise ValueError("labels must be unique")
        if counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_pairs(cls, labels: Sequence[str], true: Sequence[str], pred: Sequence[str]) -> "ConfusionMatrix":
        if len(true) != len(pred):
            raise LengthMismatch(f"{len(true)} true labels vs {len(pred)} predictions")
        index = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(true, pred):
            counts[index[t], index[p]] += 1
        return cls(tuple(labels), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict[str, Any]:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}


def _require_counts(cm: ConfusionMatrix) -> np.ndarray:
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    return cm.counts.astype(np.float64)


def _supported_rows(cm: ConfusionMatrix, counts: np.ndarray) -> np.ndarray:
    support = counts.sum(axis=1)
    keep = support > 0
    dropped = []
    if not keep.all():
        # the failed-prediction column is never a true label, so it is dropped silently
        dropped = [lab for lab, k in zip(cm.labels, keep) if not k and lab != NO_PREDICTION]
    if dropped:
        warnings.warn(f"classes without true examples excluded: {dropped}", ZeroSupportWarning, stacklevel=3)
    return keep


def accuracy(cm: ConfusionMatrix) -> float:
    counts = _require_counts(cm)
    return float(np.trace(counts) / counts.sum())


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over classes that have at least one true example."""
    counts = _require_counts(cm)
    keep = _supported_rows(cm, counts)
    recall = np.diag(counts)[keep] / counts.sum(axis=1)[keep]
    return float(recall.mean())


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean F1 over supported classes; 0/0 contributes 0."""
    counts = _require_counts(cm)
    keep = _supported_rows(cm, counts)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1[keep].mean())


def category_eval(
    records: Sequence[DatasetRecordA],
    predictions: Sequence[Optional[str]],
    taxonomy: CategoryTaxonomy,
) -> ConfusionMatrix:
    """Confusion matrix for category predictions under match-any scoring.

    A prediction equal to any of the record's plausible categories lands on
    the diagonal (its own row); otherwise the row is the record's first
    listed category. A ``None`` prediction (the model call failed) goes to an
    extra ``<none>`` column, so it always counts as wrong.

    Raises:
        LengthMismatch: not exactly one prediction per record.
        UnknownCategory: a prediction outside the taxonomy.
    """
    if len(records) != len(predictions):
        raise LengthMismatch(f"{len(records)} records vs {len(predictions)} predictions")
    labels = list(taxonomy)
    if any(p is None for p in predictions):
        labels.append(NO_PREDICTION)
    true, pred = [], []
    for rec, p in zip(records, predictions):
        if p is None:
            p = NO_PREDICTION
        elif p not in taxonomy:
            raise UnknownCategory(p)
        true.append(p if p in rec.plausible_categories else rec.canonical_category)
        pred.append(p)
    return ConfusionMatrix.from_pairs(labels, true, pred)


# -----------------------------------------------------------------------------
# Suggestion diversity
# -----------------------------------------------------------------------------

_ARTICLE_RE = re.compile(r"^(?:a|an|the)\s+")


def normalize_phrase(phrase: str) -> str:
    """Case-fold, collapse whitespace and drop one leading article."""
    text = " ".join(phrase.casefold().split())
    return _ARTICLE_RE.sub("", text)


@dataclass(frozen=True)
class DiversityResult:
    avg_unique_per_image: float
    repetition_rate: float
    total_phrases: int
    unique_phrases: int


def diversity_metrics(suggestions: Mapping[str, Sequence[str]]) -> DiversityResult:
    """Per-image uniqueness and run-wide repetition of suggested objects.

    ``avg_unique_per_image`` is the mean number of distinct normalized
    phrases per image; ``repetition_rate`` is ``1 - unique/total`` over the
    whole run. Images with no phrases are ignored.

    Raises:
        EmptyRun: no phrases at all.
    """
    groups = [[normalize_phrase(p) for p in phrases] for phrases in suggestions.values() if len(phrases)]
    total = sum(len(g) for g in groups)
    if total == 0:
        raise EmptyRun("no suggestions to score")
    unique = len({p for g in groups for p in g})
    return DiversityResult(
        avg_unique_per_image=float(np.mean([len(set(g)) for g in groups])),
        repetition_rate=1.0 - unique / total,
        total_phrases=total,
        unique_phrases=unique,
    )


# -----------------------------------------------------------------------------
# Realism
# -----------------------------------------------------------------------------


def load_human_ratings(path: Union[str, Path]) -> dict[str, list[float]]:
    """Read ``{"image_id", "rater_id", "score"}`` lines (score 1-5).

    Raises:
        MalformedAnnotationFile: bad JSON, missing keys, a score outside
            1-5, or the same rater scoring an image twice.
    """
    path = Path(path)
    if not path.is_file():
        raise MalformedAnnotationFile(f"annotation file not found: {path}")
    ratings: dict[str, list[float]] = {}
    seen: set[tuple[str, str]] = set()
    lo, hi = HUMAN_SCALE
    for num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            image_id, rater, score = str(row["image_id"]), str(row["rater_id"]), row["score"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedAnnotationFile(f"{path}:{num}: {exc}") from None
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not lo <= score <= hi:
            raise MalformedAnnotationFile(f"{path}:{num}: score must be a number in {lo}-{hi}, got {score!r}")
        if (image_id, rater) in seen:
            raise MalformedAnnotationFile(f"{path}:{num}: duplicate rating by {rater!r} for {image_id!r}")
        seen.add((image_id, rater))
        ratings.setdefault(image_id, []).append(float(score))
    return ratings


def human_mean(path: Union[str, Path], image_ids: Iterable[str] | None = None) -> float | None:
    """Mean of all ingested scores, optionally restricted to ``image_ids``."""
    ratings = load_human_ratings(path)
    if image_ids is not None:
        wanted = set(image_ids)
        ratings = {k: v for k, v in ratings.items() if k in wanted}
    scores = [s for v in ratings.values() for s in v]
    return float(np.mean(scores)) if scores else None


def clip_realism(composites: Sequence[SceneImage], originals: Sequence[SceneImage], embedder: EmbedderBackend) -> float:
    """Mean embedding cosine between each composite and its original."""
    if len(composites) != len(originals):
        raise MisalignedInputs(f"{len(composites)} composites vs {len(originals)} originals")
    if not composites:
        raise EmptyRun("no composites to score")
    sims = [cosine_similarity(embedder.embed_image(c), embedder.embed_image(o)) for c, o in zip(composites, originals)]
    return float(np.mean(sims))


def vlm_plausibility(composites: Sequence[SceneImage], vlm: VlmBackend, templates: TemplateSet | None = None) -> float:
    """Mean 0-10 VLM realism rating, normalized to [0, 1]."""
    if not composites:
        raise EmptyRun("no composites to score")
    prompt = (templates or load_templates()).render("realism_rating")
    return float(np.mean([parse_rating(vlm.answer(c, prompt)) for c in composites]))


@dataclass(frozen=True)
class RealismScores:
    clip_realism: float | None
    vlm_plausibility: float | None
    human_mean: float | None


def realism_scores(
    composites: Sequence[SceneImage],
    originals: Sequence[SceneImage],
    embedder: EmbedderBackend | None = None,
    vlm: VlmBackend | None = None,
    human_file: Union[str, Path, None] = None,
    templates: TemplateSet | None = None,
) -> RealismScores:
    """Any score whose backend or file is missing is reported as ``None``."""
    if len(composites) != len(originals):
        raise MisalignedInputs(f"{len(composites)} composites vs {len(originals)} originals")
    return RealismScores(
        clip_realism=clip_realism(composites, originals, embedder) if embedder is not None else None,
        vlm_plausibility=vlm_plausibility(composites, vlm, templates) if vlm is not None else None,
        human_mean=human_mean(human_file) if human_file is not None else None,
    )


# -----------------------------------------------------------------------------
# Sponsor evaluation
# -----------------------------------------------------------------------------


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Pixel IoU of two same-size masks; two empty masks count as identical."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("masks have different sizes")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a.bits, b.bits).sum()) / union


@dataclass(frozen=True)
class SponsorResult:
    """What sponsor evaluation needs from one pipeline run."""

    present: bool | None
    mask: BinaryMask | None = None


@dataclass(frozen=True)
class SponsorEval:
    detection_acc: float
    seg_iou: float | None
    human_logo_mean: float | None


def sponsor_eval(
    records: Sequence[DatasetRecordB],
    outputs: Sequence[Any],
    human_file: Union[str, Path, None] = None,
) -> SponsorEval:
    """Gating accuracy and mask IoU against Dataset B ground truth.

    ``outputs`` are :class:`SponsorResult` or anything with ``decision.present``
    and ``selected_mask`` (a pipeline output). An undetermined decision
    counts as wrong; a record with a ground-truth mask but no selected mask
    scores IoU 0.
    """
    if len(records) != len(outputs):
        raise LengthMismatch(f"{len(records)} records vs {len(outputs)} outputs")
    if not records:
        raise EmptyRun("no sponsor records")
    correct, ious = 0, []
    for rec, out in zip(records, outputs):
        if not isinstance(out, SponsorResult):
            out = SponsorResult(out.decision.present, out.selected_mask)
        expected = rec.variant is not Variant.NO_SPONSOR_PRODUCT
        correct += out.present is expected
        if rec.gt_mask is not None:
            pred = out.mask
            if pred is None:
                pred = BinaryMask(rec.gt_mask.width, rec.gt_mask.height,
                                  np.zeros((rec.gt_mask.height, rec.gt_mask.width), bool))
            ious.append(mask_iou(pred, rec.gt_mask))
    return SponsorEval(
        detection_acc=correct / len(records),
        seg_iou=float(np.mean(ious)) if ious else None,
        human_logo_mean=human_mean(human_file) if human_file is not None else None,
    )
