"""Sponsor-product detection and logo augmentation.

Chain: branded-object prompt -> sponsor match -> detector candidates ->
text/image similarity ranking -> region mask -> logo (asset or generated)
-> blend restricted to the mask. Images without a matched sponsor product
pass through untouched and no generation happens.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from scenefit import poisson
from scenefit.backends.base import (
    BackendSet,
    Candidate,
    EmbedderBackend,
    GeneratorBackend,
    VlmBackend,
    cosine_similarity,
)
from scenefit.compositing import (
    DEFAULT_FEATHER,
    DEFAULT_MATTE_THRESHOLD,
    alpha_composite,
    build_generation_request,
    generate,
    matte_from_white,
    resize_to_box,
    seamless_clone,
)
from scenefit.errors import (
    EmptyCandidates,
    EmptyInput,
    EmptyMask,
    NoListedObject,
    ResponseError,
    StageError,
)
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import BinaryMask, PlacementBox, SceneImage, SponsorSpec, round_half_up
from scenefit.suggestion import BrandedObjectFinding, find_branded_object

log = logging.getLogger(__name__)

SPONSOR_STAGES = ("00_scene", "01_logo", "02_final")
DEFAULT_INSET_FRACTION = 0.10
DEFAULT_LOGO_SCALE = 0.60


@dataclass(frozen=True)
class SponsorDecision:
    """``present`` is None when the VLM answer could not be interpreted."""

    present: bool | None
    coarse_location: str = ""
    finding: BrandedObjectFinding | None = None
    sponsor_id: str | None = None
    note: str = ""

    def __post_init__(self) -> None:
        if self.present is not True and self.finding is not None:
            raise ValueError("a finding is only kept when a sponsor product is present")

    def to_dict(self) -> dict[str, Any]:
        return {
            "present": self.present,
            "coarse_location": self.coarse_location,
            "finding": self.finding.to_dict() if self.finding else None,
            "sponsor_id": self.sponsor_id,
            "note": self.note,
        }


@dataclass(frozen=True)
class RegionScore:
    box: PlacementBox
    label: str
    detector_confidence: float
    clip_similarity: float
    mask: BinaryMask | None = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.detector_confidence) and np.isfinite(self.clip_similarity)):
            raise ValueError("region scores must be finite")

    def to_dict(self) -> dict[str, Any]:
        return {
            "box": self.box.to_dict(),
            "label": self.label,
            "detector_confidence": self.detector_confidence,
            "clip_similarity": self.clip_similarity,
            "has_mask": self.mask is not None,
        }


def region_sort_key(s: RegionScore):
    return (-s.clip_similarity, -s.detector_confidence, -s.box.area, s.box.x_min, s.box.y_min)


@dataclass(frozen=True)
class SponsorSettings:
    seed: int = 0
    logo_size: tuple[int, int] = (1024, 1024)
    logo_source: str = "prompt"  # "prompt" | "asset"
    mask_source: str = "auto"  # "auto" (detector mask when present) | "box"
    inset_fraction: float = DEFAULT_INSET_FRACTION
    logo_scale: float = DEFAULT_LOGO_SCALE
    opacity: float = 1.0
    matte_threshold: float = DEFAULT_MATTE_THRESHOLD
    feather: int = DEFAULT_FEATHER
    solver_eps: float = poisson.DEFAULT_EPS
    solver_max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS


# -----------------------------------------------------------------------------
# Presence
# -----------------------------------------------------------------------------


def match_sponsor(finding: BrandedObjectFinding, sponsors: Sequence[SponsorSpec]) -> SponsorSpec | None:
    """First sponsor (registry order) whose keyword table lists the object."""
    name = finding.object_name.casefold()
    for spec in sponsors:
        if any(k.casefold() == name for k in spec.product_keywords):
            return spec
    return None


def detect_sponsor_presence(
    image: SceneImage,
    sponsors: Sequence[SponsorSpec],
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
) -> SponsorDecision:
    if not sponsors:
        raise EmptyInput("sponsor list is empty")
    try:
        finding = find_branded_object(image, vlm, templates)
    except NoListedObject as exc:
        return SponsorDecision(False, note=str(exc))
    except ResponseError as exc:
        return SponsorDecision(None, note=f"undetermined: {exc}")
    spec = match_sponsor(finding, sponsors)
    if spec is None:
        return SponsorDecision(False, note=f"{finding.object_name} is not a sponsor product")
    return SponsorDecision(True, finding.location_phrase, finding, spec.sponsor_id)


# -----------------------------------------------------------------------------
# Region scoring and selection
# -----------------------------------------------------------------------------


def score_regions(
    image: SceneImage,
    candidates: Sequence[Candidate],
    spec: SponsorSpec,
    embedder: EmbedderBackend,
) -> list[RegionScore]:
    """Cosine similarity of each (clamped) candidate crop to the product text."""
    if not candidates:
        raise EmptyCandidates("no detector candidates to score")
    text = embedder.embed_text(spec.product_description)
    scores = []
    for c in candidates:
        sim = cosine_similarity(embedder.embed_image(image.crop(c.box)), text)
        scores.append(RegionScore(c.box, c.label, float(c.confidence), sim, c.mask))
    return sorted(scores, key=region_sort_key)


def select_region(
    scores: Sequence[RegionScore],
    image_size: tuple[int, int],
    inset: float | None = None,
    inset_fraction: float = DEFAULT_INSET_FRACTION,
    use_detector_mask: bool = True,
) -> tuple[PlacementBox, BinaryMask]:
    """Top-ranked region and its logo mask.

    The detector's own mask is used when present (and allowed); otherwise the
    box is rasterized shrunk by ``inset`` pixels per side, defaulting to
    ``inset_fraction`` of the box's smaller side.
    """
    if not scores:
        raise EmptyCandidates("no scored regions")
    top = min(scores, key=region_sort_key)
    width, height = image_size
    if use_detector_mask and top.mask is not None:
        if (top.mask.width, top.mask.height) != (width, height):
            raise ValueError("detector mask does not match the image size")
        return top.box, top.mask
    if inset is None:
        inset = inset_fraction * min(top.box.width, top.box.height)
    return top.box, BinaryMask.from_box(top.box, width, height, inset)


# -----------------------------------------------------------------------------
# Logo placement
# -----------------------------------------------------------------------------


def logo_box_for_mask(mask: BinaryMask, scale: float = DEFAULT_LOGO_SCALE) -> PlacementBox:
    """The mask's bounding rectangle scaled about its centre."""
    rect = mask.bounding_rect()
    if rect is None:
        raise EmptyMask("mask has no pixels")
    x0, y0, x1, y1 = rect
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    hw, hh = (x1 - x0) * scale / 2.0, (y1 - y0) * scale / 2.0
    return PlacementBox(cx - hw, cy - hh, cx + hw, cy + hh)


def obtain_logo(
    spec: SponsorSpec,
    generator: GeneratorBackend | None,
    settings: SponsorSettings = SponsorSettings(),
    templates: TemplateSet | None = None,
) -> SceneImage:
    if settings.logo_source == "asset":
        if not spec.logo_asset:
            raise ValueError(f"sponsor {spec.sponsor_id!r} has no logo_asset")
        return SceneImage.load(spec.logo_asset)
    if settings.logo_source != "prompt":
        raise ValueError(f"unknown logo_source {settings.logo_source!r}")
    if not spec.logo_prompt.strip():
        raise ValueError(f"sponsor {spec.sponsor_id!r} has no logo_prompt")
    if generator is None:
        raise ValueError("a generator backend is required for prompt-based logos")
    request = build_generation_request(spec.logo_prompt, settings.seed, settings.logo_size, templates)
    return generate(request, generator)


def place_logo(
    image: SceneImage,
    region_mask: BinaryMask,
    box: PlacementBox,
    spec: SponsorSpec,
    generator: GeneratorBackend | None,
    mode: str = "alpha",
    settings: SponsorSettings = SponsorSettings(),
    templates: TemplateSet | None = None,
    logo: SceneImage | None = None,
) -> SceneImage:
    """Blend the sponsor logo into ``region_mask`` (restricted to ``box``).

    Pixels outside the mask are never modified.

    Raises:
        EmptyMask: the mask (inside the box) has no pixels.
    """
    region = region_mask.bits & BinaryMask.from_box(box, image.width, image.height).bits
    if not region.any():
        raise EmptyMask("region mask is empty")
    region_mask = BinaryMask(image.width, image.height, region)
    if logo is None:
        logo = obtain_logo(spec, generator, settings, templates)
    cutout = matte_from_white(logo, settings.matte_threshold, settings.feather)
    logo_box = logo_box_for_mask(region_mask, settings.logo_scale)
    cutout = resize_to_box(cutout, logo_box)
    x0, y0 = round_half_up(logo_box.x_min), round_half_up(logo_box.y_min)
    h, w = cutout.height, cutout.width
    window = np.zeros((h, w), dtype=bool)
    ys0, xs0 = max(y0, 0), max(x0, 0)
    ys1, xs1 = min(y0 + h, image.height), min(x0 + w, image.width)
    window[ys0 - y0 : ys1 - y0, xs0 - x0 : xs1 - x0] = region[ys0:ys1, xs0:xs1]
    cutout = type(cutout)(cutout.rgb, cutout.alpha * window)
    if mode == "alpha":
        return alpha_composite(image, cutout, logo_box, settings.opacity)
    if mode == "seamless":
        return seamless_clone(image, cutout, logo_box, domain=window,
                              eps=settings.solver_eps, max_sweeps=settings.solver_max_sweeps)
    raise ValueError(f"unknown blend mode {mode!r}")


# -----------------------------------------------------------------------------
# Pipeline
# -----------------------------------------------------------------------------


@dataclass
class SponsorOutput:
    image: SceneImage
    decision: SponsorDecision
    scores: list[RegionScore] = field(default_factory=list)
    stage_artifacts: dict[str, SceneImage] = field(default_factory=dict)
    selected_box: PlacementBox | None = None
    selected_mask: BinaryMask | None = None
    mask_source: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "decision": self.decision.to_dict(),
            "scores": [s.to_dict() for s in self.scores],
            "selected_box": self.selected_box.to_dict() if self.selected_box else None,
            "selected_mask": (
                {"width": self.selected_mask.width, "height": self.selected_mask.height,
                 "rle": self.selected_mask.to_rle()}
                if self.selected_mask is not None else None
            ),
            "mask_source": self.mask_source,
            "stages": list(self.stage_artifacts),
        }


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_sponsor_pipeline(
    image: SceneImage,
    sponsors: Sequence[SponsorSpec],
    backends: BackendSet,
    mode: str = "alpha",
    settings: SponsorSettings = SponsorSettings(),
    templates: TemplateSet | None = None,
) -> SponsorOutput:
    """Run the full sponsor chain on one image.

    Raises:
        StageError: tagged ``presence``, ``detect``, ``score``, ``select``,
            ``logo`` or ``blend``.
    """
    templates = templates or load_templates()
    decision = _stage("presence", detect_sponsor_presence, image, sponsors, backends.vlm, templates)
    if not decision.present:
        log.info("no sponsor product (present=%s): %s", decision.present, decision.note)
        return SponsorOutput(image, decision, stage_artifacts={"00_scene": image, "02_final": image})
    spec = next(s for s in sponsors if s.sponsor_id == decision.sponsor_id)
    candidates = _stage("detect", backends.detector.detect_candidates, image)
    scores = _stage("score", score_regions, image, candidates, spec, backends.embedder)
    box, mask = _stage(
        "select", select_region, scores, (image.width, image.height),
        inset_fraction=settings.inset_fraction, use_detector_mask=settings.mask_source == "auto",
    )
    top = min(scores, key=region_sort_key)
    mask_source = "detector" if settings.mask_source == "auto" and top.mask is not None else "box"
    logo = _stage("logo", obtain_logo, spec, backends.generator, settings, templates)
    final = _stage("blend", place_logo, image, mask, box, spec, backends.generator, mode, settings, templates, logo)
    return SponsorOutput(
        image=final,
        decision=decision,
        scores=scores,
        stage_artifacts=dict(zip(SPONSOR_STAGES, (image, logo, final))),
        selected_box=box,
        selected_mask=mask,
        mask_source=mask_source,
    )
