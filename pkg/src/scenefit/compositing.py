"""Generation requests, white-background matting, resizing and blending.

All blending happens in float64; results are rounded half-up and clipped to
uint8 only when written back into a :class:`SceneImage`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage

from scenefit import poisson
from scenefit.backends.base import GeneratorBackend
from scenefit.errors import (
    AllBackground,
    BoxOutOfBounds,
    DegenerateBox,
    EmptyObjectPhrase,
    NoOverlap,
    StageError,
)
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import PlacementBox, SceneImage, draw_box, round_half_up
from scenefit.suggestion import SuggestionResult

DEFAULT_MATTE_THRESHOLD = 245
DEFAULT_FEATHER = 2
DEFAULT_GENERATION_SIZE = (1024, 1024)
BLEND_MODES = ("alpha", "seamless")
INSERT_STAGES = ("00_source", "01_object", "02_box", "03_composite")


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    negative_prompt: str
    seed: int
    size: tuple[int, int]

    def to_dict(self) -> dict[str, Any]:
        return {"prompt": self.prompt, "negative_prompt": self.negative_prompt, "seed": self.seed,
                "size": list(self.size)}


@dataclass(frozen=True, eq=False)
class CutoutObject:
    """Object colours (float, 0..255) with a per-pixel opacity matte."""

    rgb: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        rgb = np.asarray(self.rgb, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or alpha.shape != rgb.shape[:2]:
            raise ValueError(f"rgb {rgb.shape} and alpha {alpha.shape} do not match")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "alpha", alpha)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


# -----------------------------------------------------------------------------
# Generation
# -----------------------------------------------------------------------------


def build_generation_request(
    object_phrase: str,
    seed: int,
    size: tuple[int, int] = DEFAULT_GENERATION_SIZE,
    templates: TemplateSet | None = None,
) -> GenerationRequest:
    if not object_phrase or not object_phrase.strip():
        raise EmptyObjectPhrase("object phrase is empty")
    templates = templates or load_templates()
    return GenerationRequest(
        prompt=templates.render("object_synthesis", object_name=object_phrase.strip()),
        negative_prompt=templates["object_synthesis_negative"],
        seed=int(seed),
        size=(int(size[0]), int(size[1])),
    )


def generate(request: GenerationRequest, generator: GeneratorBackend) -> SceneImage:
    image = generator.generate(request.prompt, request.negative_prompt, request.seed, request.size)
    if (image.width, image.height) != tuple(request.size):
        raise ValueError(
            f"generator returned {image.width}x{image.height}, requested {request.size[0]}x{request.size[1]}"
        )
    return image


# -----------------------------------------------------------------------------
# Matting and resizing
# -----------------------------------------------------------------------------


def matte_from_white(
    image: SceneImage, threshold: float = DEFAULT_MATTE_THRESHOLD, feather: int = DEFAULT_FEATHER
) -> CutoutObject:
    """Alpha 0 where the smallest channel is >= threshold, else 1, then box-blurred.

    The blur is a ``(2 * feather + 1)`` square mean filter on alpha only,
    with edge replication.

    Raises:
        AllBackground: no pixel is darker than the threshold.
    """
    if not 0 < threshold < 255:
        raise ValueError(f"threshold must lie in (0, 255), got {threshold}")
    if feather < 0 or int(feather) != feather:
        raise ValueError(f"feather must be a non-negative integer, got {feather}")
    hard = (image.pixels.min(axis=2) < threshold).astype(np.float64)
    if not hard.any():
        raise AllBackground("no foreground pixel below the matting threshold")
    alpha = hard
    if feather:
        alpha = ndimage.uniform_filter(hard, size=2 * int(feather) + 1, mode="nearest")
        alpha = np.clip(alpha, 0.0, 1.0)
        alpha[alpha < 1e-12] = 0.0
    return CutoutObject(image.pixels.astype(np.float64), alpha)


def _bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-centre-aligned bilinear resample along the first two axes."""

    def axis_weights(n_in: int, n_out: int):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    in_h, in_w = values.shape[:2]
    y0, y1, ty = axis_weights(in_h, out_h)
    x0, x1, tx = axis_weights(in_w, out_w)
    extra = (1,) * (values.ndim - 2)
    ty = ty.reshape((-1, 1) + extra)
    tx = tx.reshape((1, -1) + extra)
    top, bottom = values[y0], values[y1]
    rows = top + (bottom - top) * ty
    left, right = rows[:, x0], rows[:, x1]
    return left + (right - left) * tx


def box_pixel_size(box: PlacementBox) -> tuple[int, int]:
    return round_half_up(box.width), round_half_up(box.height)


def resize_to_box(cutout: CutoutObject, box: PlacementBox) -> CutoutObject:
    """Stretch to ``round(box.width) x round(box.height)``; aspect not kept.

    Raises:
        DegenerateBox: either rounded dimension is zero.
    """
    w, h = box_pixel_size(box)
    if w < 1 or h < 1:
        raise DegenerateBox(f"box {box.as_tuple()} rounds to {w}x{h}")
    if (w, h) == (cutout.width, cutout.height):
        return cutout
    return CutoutObject(_bilinear(cutout.rgb, h, w), _bilinear(cutout.alpha, h, w))


# -----------------------------------------------------------------------------
# Blending
# -----------------------------------------------------------------------------


def _fit(cutout: CutoutObject, box: PlacementBox) -> CutoutObject:
    if (cutout.width, cutout.height) != box_pixel_size(box):
        return resize_to_box(cutout, box)
    return cutout


def alpha_composite(
    scene: SceneImage, cutout: CutoutObject, box: PlacementBox, opacity: float = 1.0
) -> SceneImage:
    """``out = m * fg + (1 - m) * bg`` with ``m = alpha * opacity``.

    The cutout (resized to the box when needed) is anchored at the box's
    rounded top-left corner; parts outside the image are cropped.

    Raises:
        NoOverlap: the box lies entirely outside the image.
    """
    if not 0.0 <= opacity <= 1.0:
        raise ValueError(f"opacity must lie in [0, 1], got {opacity}")
    cutout = _fit(cutout, box)
    x0, y0 = round_half_up(box.x_min), round_half_up(box.y_min)
    ix0, iy0 = max(x0, 0), max(y0, 0)
    ix1, iy1 = min(x0 + cutout.width, scene.width), min(y0 + cutout.height, scene.height)
    if ix1 <= ix0 or iy1 <= iy0:
        raise NoOverlap(f"box {box.as_tuple()} does not overlap the {scene.width}x{scene.height} image")
    fg = cutout.rgb[iy0 - y0 : iy1 - y0, ix0 - x0 : ix1 - x0]
    m = (cutout.alpha[iy0 - y0 : iy1 - y0, ix0 - x0 : ix1 - x0] * opacity)[..., None]
    out = scene.pixels.copy()
    bg = out[iy0:iy1, ix0:ix1].astype(np.float64)
    out[iy0:iy1, ix0:ix1] = to_uint8(bg + m * (fg - bg))
    return scene.with_pixels(out)


def seamless_clone_float(
    scene: SceneImage,
    cutout: CutoutObject,
    box: PlacementBox,
    domain: np.ndarray | None = None,
    eps: float = poisson.DEFAULT_EPS,
    max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS,
) -> tuple[np.ndarray, poisson.SolveReport]:
    """Unrounded seamless clone; returns the full float image and solve report.

    ``domain`` (cutout-shaped boolean) restricts the unknowns; by default
    every pixel of the box is solved for.

    Raises:
        BoxOutOfBounds: the box does not keep a one-pixel margin inside the
            image.
        NonConvergence: the solver hit ``max_sweeps``.
    """
    cutout = _fit(cutout, box)
    x0, y0 = round_half_up(box.x_min), round_half_up(box.y_min)
    x1, y1 = x0 + cutout.width, y0 + cutout.height
    if x0 < 1 or y0 < 1 or x1 > scene.width - 1 or y1 > scene.height - 1:
        raise BoxOutOfBounds(
            f"seamless clone needs a 1 px margin; box spans x[{x0},{x1}) y[{y0},{y1}) "
            f"in a {scene.width}x{scene.height} image"
        )
    h, w = cutout.height, cutout.width
    dst = scene.pixels[y0 - 1 : y1 + 1, x0 - 1 : x1 + 1].astype(np.float64)
    src = dst.copy()
    src[1:-1, 1:-1] = cutout.rgb
    alpha = np.zeros((h + 2, w + 2))
    alpha[1:-1, 1:-1] = cutout.alpha
    dom = np.zeros((h + 2, w + 2), dtype=bool)
    dom[1:-1, 1:-1] = True if domain is None else np.asarray(domain, dtype=bool)
    window, report = poisson.solve(src, dst, alpha, dom, eps=eps, max_sweeps=max_sweeps)
    out = scene.pixels.astype(np.float64)
    out[y0 - 1 : y1 + 1, x0 - 1 : x1 + 1] = window
    return out, report


def seamless_clone(
    scene: SceneImage,
    cutout: CutoutObject,
    box: PlacementBox,
    domain: np.ndarray | None = None,
    eps: float = poisson.DEFAULT_EPS,
    max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS,
) -> SceneImage:
    out, _ = seamless_clone_float(scene, cutout, box, domain, eps, max_sweeps)
    return scene.with_pixels(to_uint8(out))


def blend(
    scene: SceneImage,
    cutout: CutoutObject,
    box: PlacementBox,
    mode: str = "alpha",
    opacity: float = 1.0,
    eps: float = poisson.DEFAULT_EPS,
    max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS,
) -> SceneImage:
    if mode == "alpha":
        return alpha_composite(scene, cutout, box, opacity)
    if mode == "seamless":
        return seamless_clone(scene, cutout, box, eps=eps, max_sweeps=max_sweeps)
    raise ValueError(f"unknown blend mode {mode!r}; expected one of {BLEND_MODES}")


# -----------------------------------------------------------------------------
# End-to-end insertion
# -----------------------------------------------------------------------------


@dataclass
class CompositeOutput:
    image: SceneImage
    request: GenerationRequest
    stage_artifacts: dict[str, SceneImage] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)


def insert_object(
    scene: SceneImage,
    suggestion: SuggestionResult,
    box: PlacementBox,
    generator: GeneratorBackend,
    mode: str = "alpha",
    seed: int = 0,
    size: tuple[int, int] = DEFAULT_GENERATION_SIZE,
    opacity: float = 1.0,
    threshold: float = DEFAULT_MATTE_THRESHOLD,
    feather: int = DEFAULT_FEATHER,
    eps: float = poisson.DEFAULT_EPS,
    max_sweeps: int = poisson.DEFAULT_MAX_SWEEPS,
    templates: TemplateSet | None = None,
) -> CompositeOutput:
    """Generate the suggested object and blend it into ``box``.

    Raises:
        StageError: tagged ``generate``, ``matte``, ``resize`` or
            ``composite``.
    """
    if mode not in BLEND_MODES:
        raise ValueError(f"unknown blend mode {mode!r}")
    try:
        request = build_generation_request(suggestion.object_phrase, seed, size, templates)
        obj = generate(request, generator)
    except Exception as exc:
        raise StageError("generate", exc) from exc
    try:
        cutout = matte_from_white(obj, threshold, feather)
    except Exception as exc:
        raise StageError("matte", exc) from exc
    try:
        cutout = resize_to_box(cutout, box)
    except Exception as exc:
        raise StageError("resize", exc) from exc
    try:
        result = blend(scene, cutout, box, mode, opacity, eps, max_sweeps)
    except Exception as exc:
        raise StageError("composite", exc) from exc
    stages = dict(zip(INSERT_STAGES, (scene, obj, draw_box(scene, box), result)))
    metadata = {
        "seed": int(seed),
        "prompt": request.prompt,
        "negative_prompt": request.negative_prompt,
        "object_phrase": suggestion.object_phrase,
        "category": suggestion.chosen_category,
        "box": box.to_dict(),
        "mode": mode,
        "opacity": opacity,
        "generator": generator.name,
    }
    return CompositeOutput(result, request, stages, metadata)
