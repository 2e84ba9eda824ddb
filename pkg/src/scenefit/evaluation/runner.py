"""Live evaluation drivers: run the pipelines over a dataset and fill a report.

Every per-image step is isolated: a failure is recorded (image, stage,
error) and the run moves on. Work is spread over a bounded thread pool
whose size is capped by the strictest backend concurrency limit; results
keep dataset order, so reports do not depend on scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from scenefit import poisson
from scenefit.backends.base import BackendSet, VlmBackend
from scenefit.compositing import DEFAULT_FEATHER, DEFAULT_MATTE_THRESHOLD, insert_object
from scenefit.errors import EmptyInput
from scenefit.evaluation import metrics
from scenefit.evaluation.report import (
    EvalReport,
    computed,
    empty_report,
    ingested,
    set_run_value,
)
from scenefit.placement import (
    CollisionThresholds,
    PlacementAssessment,
    assess_placement,
    dataset_collision_rate,
    mean_iou,
    predict_placement,
)
from scenefit.prompts import TemplateSet
from scenefit.scene_model import (
    CategoryTaxonomy,
    DatasetRecordA,
    DatasetRecordB,
    PlacementBox,
    SceneImage,
    SponsorSpec,
)
from scenefit.sponsor import SponsorSettings, run_sponsor_pipeline
from scenefit.suggestion import SuggestionResult, single_stage_suggest, two_stage_suggest

log = logging.getLogger(__name__)

STRATEGIES = ("single", "two-stage")


@dataclass(frozen=True)
class EvalSettings:
    seed: int = 0
    k: int = 3
    prompting: str = "two-stage"
    blend_mode: str = "alpha"
    box_source: str = "gt"
    jobs: int = 1
    generation_size: tuple[int, int] = (1024, 1024)
    matte_threshold: float = DEFAULT_MATTE_THRESHOLD
    feather: int = DEFAULT_FEATHER
    solver_eps: float = poisson.DEFAULT_EPS
    solver_max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS
    collision: CollisionThresholds = CollisionThresholds()
    human_realism_file: Optional[str] = None
    human_logo_file: Optional[str] = None

    def __post_init__(self) -> None:
        if self.prompting not in STRATEGIES:
            raise ValueError(f"prompting must be one of {STRATEGIES}, got {self.prompting!r}")
        if self.box_source not in ("gt", "predicted"):
            raise ValueError(f"box_source must be 'gt' or 'predicted', got {self.box_source!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class Failures:
    items: list[dict[str, Any]] = field(default_factory=list)

    def add(self, item: str, stage: str, exc: BaseException) -> None:
        log.warning("%s failed at %s: %s", item, stage, exc)
        self.items.append({"item": item, "stage": stage, "error": f"{type(exc).__name__}: {exc}"})


def run_jobs(fn: Callable[[Any], Any], items: Sequence[Any], jobs: int = 1) -> list[tuple[Any, BaseException | None]]:
    """Apply ``fn`` to each item; returns ``(result, error)`` pairs in input order."""

    def safe(item):
        try:
            return fn(item), None
        except Exception as exc:  # recorded, never raised
            return None, exc

    if jobs <= 1 or len(items) <= 1:
        return [safe(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(safe, items))


def suggest(
    image: SceneImage,
    strategy: str,
    taxonomy: CategoryTaxonomy,
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
    rank: int = 0,
    box: PlacementBox | None = None,
) -> SuggestionResult:
    if strategy == "two-stage":
        return two_stage_suggest(image, taxonomy, vlm, templates, box=box, rank=rank)
    if strategy == "single":
        return single_stage_suggest(image, taxonomy, vlm, templates, box=box)
    raise ValueError(f"unknown prompting strategy {strategy!r}")


# -----------------------------------------------------------------------------
# Per-experiment drivers
# -----------------------------------------------------------------------------


def image_id(record: DatasetRecordA | DatasetRecordB) -> str:
    return record.image_path


def run_suggestions(
    records: Sequence[DatasetRecordA],
    images: Mapping[str, SceneImage],
    taxonomy: CategoryTaxonomy,
    vlm: VlmBackend,
    strategy: str,
    templates: TemplateSet | None = None,
    jobs: int = 1,
    failures: Failures | None = None,
    draw_gt_box: bool = False,
) -> list[Optional[SuggestionResult]]:
    """One suggestion per record; ``None`` where the model call failed.

    With ``draw_gt_box`` the record's ground-truth box is drawn into the
    prompt image; otherwise the model sees the unmarked scene.
    """
    failures = failures if failures is not None else Failures()
    results = run_jobs(
        lambda r: suggest(images[image_id(r)], strategy, taxonomy, vlm, templates,
                          box=r.gt_box if draw_gt_box else None),
        records,
        jobs,
    )
    out = []
    for rec, (res, err) in zip(records, results):
        if err is not None:
            failures.add(image_id(rec), f"suggest[{strategy}]", err)
        out.append(res)
    return out


def suggestion_sweep(
    images: Mapping[str, SceneImage],
    taxonomy: CategoryTaxonomy,
    vlm: VlmBackend,
    strategy: str,
    k: int = 3,
    templates: TemplateSet | None = None,
    jobs: int = 1,
    failures: Failures | None = None,
) -> dict[str, list[str]]:
    """K object suggestions per image.

    Two-stage sample ``i`` expands the ranked category at position
    ``i mod 3``; single-stage samples repeat the same combined prompt, so a
    deterministic model repeats itself exactly as a collapsing one would.
    """
    failures = failures if failures is not None else Failures()
    tasks = [(iid, i) for iid in images for i in range(k)]
    results = run_jobs(
        lambda t: suggest(images[t[0]], strategy, taxonomy, vlm, templates, rank=t[1] % 3).object_phrase,
        tasks,
        jobs,
    )
    out: dict[str, list[str]] = {iid: [] for iid in images}
    for (iid, i), (phrase, err) in zip(tasks, results):
        if err is not None:
            failures.add(f"{iid}#{i}", f"sweep[{strategy}]", err)
        else:
            out[iid].append(phrase)
    return out


def run_placement(
    records: Sequence[DatasetRecordA],
    images: Mapping[str, SceneImage],
    categories: Sequence[Optional[str]],
    backends: BackendSet,
    taxonomy: CategoryTaxonomy,
    thresholds: CollisionThresholds = CollisionThresholds(),
    templates: TemplateSet | None = None,
    jobs: int = 1,
    failures: Failures | None = None,
) -> list[tuple[Optional[PlacementBox], Optional[PlacementAssessment]]]:
    """Predict a box for each record's category and assess it.

    The category is the model's prediction when there is one, else the
    record's first annotated category. A failed contextual rating leaves
    ``context_score`` empty but keeps IoU and collisions.
    """
    failures = failures if failures is not None else Failures()

    def one(args):
        rec, cat = args
        image = images[image_id(rec)]
        box, _ = predict_placement(image, cat, backends.detector, taxonomy)
        try:
            return box, assess_placement(image, box, rec.gt_box, cat, backends.vlm, thresholds, templates)
        except Exception as exc:
            failures.add(image_id(rec), "context", exc)
            return box, assess_placement(image, box, rec.gt_box, thresholds=thresholds)

    items = [(r, c if c is not None else r.canonical_category) for r, c in zip(records, categories)]
    out = []
    for rec, (res, err) in zip(records, run_jobs(one, items, jobs)):
        if err is not None:
            failures.add(image_id(rec), "placement", err)
            res = (None, None)
        out.append(res)
    return out


def run_composites(
    records: Sequence[DatasetRecordA],
    images: Mapping[str, SceneImage],
    suggestions: Sequence[Optional[SuggestionResult]],
    boxes: Sequence[Optional[PlacementBox]],
    backends: BackendSet,
    settings: EvalSettings,
    templates: TemplateSet | None = None,
    failures: Failures | None = None,
) -> list[tuple[SceneImage, SceneImage]]:
    """``(original, composite)`` pairs for every record that could be composited."""
    failures = failures if failures is not None else Failures()

    def one(args):
        rec, sug, box = args
        if sug is None:
            raise EmptyInput("no suggestion for this image")
        if box is None:
            raise EmptyInput("no placement box for this image")
        image = images[image_id(rec)]
        out = insert_object(
            image, sug, box, backends.generator, settings.blend_mode, settings.seed, settings.generation_size,
            threshold=settings.matte_threshold, feather=settings.feather, eps=settings.solver_eps,
            max_sweeps=settings.solver_max_sweeps, templates=templates,
        )
        return image, out.image

    pairs = []
    items = list(zip(records, suggestions, boxes))
    for rec, (res, err) in zip(records, run_jobs(one, items, settings.jobs)):
        if err is not None:
            failures.add(image_id(rec), "composite", err)
        else:
            pairs.append(res)
    return pairs


def run_sponsor(
    records: Sequence[DatasetRecordB],
    sponsors: Sequence[SponsorSpec],
    backends: BackendSet,
    mode: str = "alpha",
    settings: SponsorSettings = SponsorSettings(),
    templates: TemplateSet | None = None,
    jobs: int = 1,
    failures: Failures | None = None,
) -> list[metrics.SponsorResult]:
    """Sponsor pipeline per record; a failed run counts as undetermined."""
    failures = failures if failures is not None else Failures()

    def one(rec):
        out = run_sponsor_pipeline(rec.load_image(), sponsors, backends, mode, settings, templates)
        return metrics.SponsorResult(out.decision.present, out.selected_mask)

    results = []
    for rec, (res, err) in zip(records, run_jobs(one, records, jobs)):
        if err is not None:
            failures.add(image_id(rec), "sponsor", err)
            res = metrics.SponsorResult(None, None)
        results.append(res)
    return results


# -----------------------------------------------------------------------------
# Report assembly
# -----------------------------------------------------------------------------


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def category_metrics(
    records: Sequence[DatasetRecordA], predictions: Sequence[Optional[str]], taxonomy: CategoryTaxonomy
) -> tuple[float, float, float]:
    cm = metrics.category_eval(records, predictions, taxonomy)
    return metrics.accuracy(cm), metrics.balanced_accuracy(cm), metrics.macro_f1(cm)


def _predicted_category(s: Optional[SuggestionResult], taxonomy: CategoryTaxonomy) -> Optional[str]:
    if s is None or s.chosen_category not in taxonomy:
        return None
    return s.chosen_category


def fill_category_row(report: EvalReport, label: str, records, predictions, taxonomy, **meta) -> None:
    if not records:
        raise EmptyInput("dataset has no records")
    acc, bal, f1 = category_metrics(records, predictions, taxonomy)
    report.tables["category"].add_row(label, [computed(acc), computed(bal), computed(f1)], source="run", **meta)


def fill_diversity_rows(report: EvalReport, sweeps: Mapping[str, Mapping[str, Sequence[str]]], k: int) -> None:
    for strategy, sweep in sweeps.items():
        label = {"single": "Single-stage", "two-stage": "Two-stage"}[strategy] + " (this run)"
        try:
            d = metrics.diversity_metrics(sweep)
            cells = [computed(d.avg_unique_per_image), computed(d.repetition_rate)]
            meta = {"k": k, "total_phrases": d.total_phrases, "unique_phrases": d.unique_phrases}
        except metrics.EmptyRun:
            cells = [computed(None, "no suggestions"), computed(None, "no suggestions")]
            meta = {"k": k}
        report.tables["suggestion"].add_row(label, cells, source="run", **meta)


def live_report(
    records: Sequence[DatasetRecordA],
    taxonomy: CategoryTaxonomy,
    backends: BackendSet,
    settings: EvalSettings,
    provenance: Mapping[str, Any],
    templates: TemplateSet | None = None,
    sponsor_records: Sequence[DatasetRecordB] = (),
    sponsors: Sequence[SponsorSpec] = (),
    sponsor_settings: SponsorSettings | None = None,
) -> EvalReport:
    """Run every experiment the configured backends support and build a report.

    Raises:
        EmptyInput: the dataset has no records.
    """
    if not records:
        raise EmptyInput("dataset has no records")
    report = empty_report(provenance)
    failures = Failures()
    jobs = backends.max_workers(settings.jobs)
    images = {image_id(r): r.load_image() for r in records}

    suggestions = run_suggestions(records, images, taxonomy, backends.vlm, settings.prompting, templates, jobs,
                                  failures, draw_gt_box=settings.box_source == "gt")
    predictions = [_predicted_category(s, taxonomy) for s in suggestions]
    fill_category_row(report, f"{backends.vlm.name} ({settings.prompting}, this run)", records, predictions, taxonomy)

    sweeps = {
        strategy: suggestion_sweep(images, taxonomy, backends.vlm, strategy, settings.k, templates, jobs, failures)
        for strategy in STRATEGIES
    }
    fill_diversity_rows(report, sweeps, settings.k)

    placements: list[tuple[Optional[PlacementBox], Optional[PlacementAssessment]]]
    if backends.detector is not None:
        placements = run_placement(
            records, images, predictions, backends, taxonomy, settings.collision, templates, jobs, failures
        )
        assessed = [a for _, a in placements if a is not None]
        report.tables["placement"].add_row(
            f"{backends.detector.name} (this run)",
            [computed(_mean(a.iou for a in assessed)), computed(_mean(a.context_score for a in assessed))],
            source="run",
            assessed=len(assessed),
        )
        if assessed:
            report.extras["collision_rate"] = dataset_collision_rate(assessed)
    else:
        placements = [(None, None)] * len(records)

    if backends.generator is not None:
        boxes = [r.gt_box for r in records] if settings.box_source == "gt" else [b for b, _ in placements]
        pairs = run_composites(records, images, suggestions, boxes, backends, settings, templates, failures)
        originals, composites = [p[0] for p in pairs], [p[1] for p in pairs]
        realism = report.tables["realism"]
        if pairs and backends.embedder is not None:
            set_run_value(realism, "CLIP Realism Score", computed(metrics.clip_realism(composites, originals,
                                                                                       backends.embedder)))
        if pairs and backends.vlm is not None:
            try:
                set_run_value(realism, "VLM Plausibility Score",
                              computed(metrics.vlm_plausibility(composites, backends.vlm, templates)))
            except Exception as exc:
                failures.add("realism", "vlm_plausibility", exc)
        report.extras["composites"] = len(pairs)
    if settings.human_realism_file:
        set_run_value(report.tables["realism"], "Human Realism Score (1-5)",
                      ingested(metrics.human_mean(settings.human_realism_file)))

    if sponsor_records:
        results = run_sponsor(
            sponsor_records, sponsors, backends, settings.blend_mode,
            sponsor_settings or SponsorSettings(seed=settings.seed), templates, jobs, failures,
        )
        sev = metrics.sponsor_eval(sponsor_records, results)
        table = report.tables["sponsor"]
        set_run_value(table, "Sponsor-product detection accuracy", computed(sev.detection_acc))
        set_run_value(table, "Segmentation IoU", computed(sev.seg_iou))
    if settings.human_logo_file:
        set_run_value(report.tables["sponsor"], "Logo realism score (human)",
                      ingested(metrics.human_mean(settings.human_logo_file)))

    report.failures = sorted(failures.items, key=lambda f: (f["stage"], f["item"]))
    return report


@dataclass(frozen=True)
class CannedPrediction:
    """A stored prediction for one image (all fields optional except the id)."""

    image_path: str
    category: Optional[str] = None
    objects: tuple[str, ...] = ()
    box: Optional[PlacementBox] = None


def canned_report(
    records: Sequence[DatasetRecordA],
    predictions: Mapping[str, CannedPrediction],
    taxonomy: CategoryTaxonomy,
    provenance: Mapping[str, Any],
    label: str = "predictions file",
) -> EvalReport:
    """Score stored predictions: category metrics, diversity and box IoU.

    Records without a stored prediction count as a failed prediction.
    """
    if not records:
        raise EmptyInput("dataset has no records")
    report = empty_report(provenance)
    preds = [predictions.get(image_id(r)) for r in records]
    fill_category_row(report, label, records, [p.category if p else None for p in preds], taxonomy)
    objects = {image_id(r): list(p.objects) for r, p in zip(records, preds) if p and p.objects}
    if objects:
        d = metrics.diversity_metrics(objects)
        report.tables["suggestion"].add_row(
            label, [computed(d.avg_unique_per_image), computed(d.repetition_rate)], source="run",
            total_phrases=d.total_phrases, unique_phrases=d.unique_phrases,
        )
    pairs = [(p.box, r.gt_box) for r, p in zip(records, preds) if p and p.box is not None]
    if pairs:
        report.tables["placement"].add_row(
            label, [computed(mean_iou(pairs)), computed(None, "no contextual rating in stored predictions")],
            source="run",
        )
    missing = [image_id(r) for r, p in zip(records, preds) if p is None]
    report.failures = [{"item": m, "stage": "predictions", "error": "no stored prediction"} for m in missing]
    return report
