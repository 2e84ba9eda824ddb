"""Ablation grid: prompting strategy x VLM backend, end-to-end.

Each grid row swaps only the VLM and the prompting strategy; detector,
generator and embedder stay fixed. A row that fails is kept in the report
(marked failed) and the remaining rows still run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from scenefit.backends.base import BackendSet, VlmBackend
from scenefit.errors import ConfigError, EmptyInput
from scenefit.evaluation import metrics
from scenefit.evaluation.report import EvalReport, computed, empty_report
from scenefit.evaluation.runner import (
    STRATEGIES,
    EvalSettings,
    Failures,
    _predicted_category,
    image_id,
    run_composites,
    run_suggestions,
)
from scenefit.prompts import TemplateSet
from scenefit.scene_model import CategoryTaxonomy, DatasetRecordA

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationRow:
    prompting: str
    vlm: str
    label: str = ""

    def __post_init__(self) -> None:
        if self.prompting not in STRATEGIES:
            raise ConfigError(f"ablation prompting must be one of {STRATEGIES}, got {self.prompting!r}")
        if not self.label:
            name = "Single-stage" if self.prompting == "single" else "Two-stage"
            object.__setattr__(self, "label", f"{name} prompting + {self.vlm}")


def parse_grid(data: Any) -> list[AblationRow]:
    """Grid from a list of ``{prompting, vlm, label?}`` mappings."""
    if isinstance(data, Mapping):
        data = data.get("rows")
    if not isinstance(data, list) or not data:
        raise ConfigError("ablation grid must be a non-empty list of rows")
    rows = []
    for i, row in enumerate(data):
        if not isinstance(row, Mapping) or set(row) - {"prompting", "vlm", "label"} or not {"prompting", "vlm"} <= set(row):
            raise ConfigError(f"ablation row {i}: expected keys prompting, vlm and optional label")
        rows.append(AblationRow(str(row["prompting"]), str(row["vlm"]), str(row.get("label", ""))))
    labels = [r.label for r in rows]
    if len(set(labels)) != len(labels):
        raise ConfigError("ablation row labels must be unique")
    return rows


def run_ablation(
    grid: Sequence[AblationRow],
    records: Sequence[DatasetRecordA],
    taxonomy: CategoryTaxonomy,
    backends: BackendSet,
    vlms: Mapping[str, VlmBackend],
    settings: EvalSettings,
    provenance: Mapping[str, Any],
    templates: TemplateSet | None = None,
    report: EvalReport | None = None,
) -> EvalReport:
    """One computed row per grid entry: category accuracy and realism.

    Realism is the mean composite-vs-original embedding cosine over
    composites at the ground-truth boxes.
    """
    if not records:
        raise EmptyInput("dataset has no records")
    report = report or empty_report(provenance)
    table = report.tables["ablation"]
    images = {image_id(r): r.load_image() for r in records}
    for row in grid:
        failures = Failures()
        label = f"{row.label} (this run)"
        try:
            vlm = vlms[row.vlm]
        except KeyError:
            exc = ConfigError(f"unknown VLM {row.vlm!r}; configured: {sorted(vlms)}")
            table.add_row(label, [computed(None, "failed"), computed(None, "failed")], source="run",
                          status="failed", error=str(exc), prompting=row.prompting, vlm=row.vlm)
            report.failures.append({"item": row.label, "stage": "ablation", "error": str(exc)})
            continue
        row_backends = BackendSet(vlm, backends.detector, backends.generator, backends.embedder)
        jobs = row_backends.max_workers(settings.jobs)
        try:
            suggestions = run_suggestions(records, images, taxonomy, vlm, row.prompting, templates, jobs, failures,
                                          draw_gt_box=settings.box_source == "gt")
            predictions = [_predicted_category(s, taxonomy) for s in suggestions]
            cm = metrics.category_eval(records, predictions, taxonomy)
            acc = metrics.accuracy(cm)
            realism = None
            if backends.generator is not None and backends.embedder is not None:
                pairs = run_composites(records, images, suggestions, [r.gt_box for r in records],
                                       row_backends, settings, templates, failures)
                if pairs:
                    realism = metrics.clip_realism([p[1] for p in pairs], [p[0] for p in pairs], backends.embedder)
            note = "" if realism is not None else "no composites"
            table.add_row(label, [computed(acc), computed(realism, note)], source="run", status="ok",
                          prompting=row.prompting, vlm=row.vlm, backend=vlm.descriptor(),
                          item_failures=len(failures.items))
        except Exception as exc:
            log.warning("ablation row %r failed: %s", row.label, exc)
            table.add_row(label, [computed(None, "failed"), computed(None, "failed")], source="run",
                          status="failed", error=f"{type(exc).__name__}: {exc}", prompting=row.prompting,
                          vlm=row.vlm)
        report.failures.extend({**f, "row": row.label} for f in failures.items)
    return report
