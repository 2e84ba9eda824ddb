"""Metrics, evaluation drivers, reports and the ablation grid."""

from scenefit.evaluation.ablation import AblationRow, parse_grid, run_ablation
from scenefit.evaluation.metrics import (
    ConfusionMatrix,
    DiversityResult,
    RealismScores,
    SponsorEval,
    SponsorResult,
    accuracy,
    balanced_accuracy,
    category_eval,
    clip_realism,
    diversity_metrics,
    human_mean,
    load_human_ratings,
    macro_f1,
    mask_iou,
    normalize_phrase,
    realism_scores,
    sponsor_eval,
    vlm_plausibility,
)
from scenefit.evaluation.report import PROVENANCE_TAGS, Cell, EvalReport, Table, empty_report
from scenefit.evaluation.runner import EvalSettings, canned_report, live_report, suggestion_sweep

__all__ = [
    "AblationRow",
    "parse_grid",
    "run_ablation",
    "ConfusionMatrix",
    "DiversityResult",
    "RealismScores",
    "SponsorEval",
    "SponsorResult",
    "accuracy",
    "balanced_accuracy",
    "category_eval",
    "clip_realism",
    "diversity_metrics",
    "human_mean",
    "load_human_ratings",
    "macro_f1",
    "mask_iou",
    "normalize_phrase",
    "realism_scores",
    "sponsor_eval",
    "vlm_plausibility",
    "PROVENANCE_TAGS",
    "Cell",
    "EvalReport",
    "Table",
    "empty_report",
    "EvalSettings",
    "canned_report",
    "live_report",
    "suggestion_sweep",
]
