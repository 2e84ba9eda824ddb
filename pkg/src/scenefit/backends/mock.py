"""Deterministic test doubles for every backend interface.

All mocks are referentially transparent: the output depends only on the
arguments (and on construction parameters), never on call history. Each
mock counts its calls in ``self.calls`` so tests can assert gating.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np
from scipy import ndimage

from scenefit.backends.base import (
    Candidate,
    DetectorBackend,
    EmbedderBackend,
    GeneratorBackend,
    VlmBackend,
    sort_candidates,
)
from scenefit.errors import AmbiguousScript, DetectorFailure, UnscriptedPrompt
from scenefit.scene_model import BinaryMask, PlacementBox, SceneImage

# A scripted response is a literal string, ``{"by_image": [..]}`` (one of the
# strings picked by the image's content hash), ``{"by_digest": {sha256: str},
# "default": str}`` (an exact answer per image) or a callable(image, prompt).
Response = Union[str, Mapping[str, Sequence[str]], Callable[[SceneImage, str], str]]


# -----------------------------------------------------------------------------
# Glob patterns (only ``*`` and ``?`` are wildcards)
# -----------------------------------------------------------------------------


def glob_to_regex(pattern: str) -> re.Pattern:
    parts = []
    for ch in pattern:
        if ch == "*":
            parts.append(".*")
        elif ch == "?":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def globs_overlap(p: str, q: str) -> bool:
    """True when some string matches both glob patterns."""

    @lru_cache(maxsize=None)
    def walk(i: int, j: int) -> bool:
        if i == len(p) and j == len(q):
            return True
        if i < len(p) and p[i] == "*":
            if walk(i + 1, j):
                return True
            return j < len(q) and walk(i, j + 1)
        if j < len(q) and q[j] == "*":
            if walk(i, j + 1):
                return True
            return i < len(p) and walk(i + 1, j)
        if i == len(p) or j == len(q):
            return False
        if p[i] == "?" or q[j] == "?" or p[i] == q[j]:
            return walk(i + 1, j + 1)
        return False

    return walk(0, 0)


def _pick_by_image(image: SceneImage, options: Sequence[str]) -> str:
    if not options:
        raise ValueError("by_image response needs at least one option")
    return options[int(image.digest()[:12], 16) % len(options)]


def _resolve_mapping(image: SceneImage, prompt: str, response: Mapping) -> str:
    if "by_digest" in response:
        answer = response["by_digest"].get(image.digest(), response.get("default"))
        if answer is None:
            raise UnscriptedPrompt(f"{prompt} [image {image.digest()[:12]}]")
        return answer
    return _pick_by_image(image, response["by_image"])


class MockVlm(VlmBackend):
    """VLM answering from a ``{glob pattern: response}`` script.

    Raises:
        AmbiguousScript: at construction, when two patterns can match the
            same prompt.
        UnscriptedPrompt: from :meth:`answer`, when no pattern matches.
    """

    def __init__(self, script: Mapping[str, Response], name: str = "mock-vlm"):
        self.name = name
        self.script = dict(script)
        keys = list(self.script)
        for a in range(len(keys)):
            for b in range(a + 1, len(keys)):
                if globs_overlap(keys[a], keys[b]):
                    raise AmbiguousScript(f"patterns {keys[a]!r} and {keys[b]!r} overlap")
        self._compiled = [(glob_to_regex(k), k) for k in keys]
        self.calls: Counter[str] = Counter()

    def answer(self, image: SceneImage, prompt: str) -> str:
        self.calls["answer"] += 1
        for regex, key in self._compiled:
            if regex.fullmatch(prompt):
                response = self.script[key]
                if callable(response):
                    return response(image, prompt)
                if isinstance(response, Mapping):
                    return _resolve_mapping(image, prompt, response)
                return response
        raise UnscriptedPrompt(prompt)


# -----------------------------------------------------------------------------
# Detector
# -----------------------------------------------------------------------------


class MockDetector(DetectorBackend):
    """Fixed per-category placement boxes plus a colour-blob candidate finder.

    ``boxes`` maps a category to ``(x_min, y_min, x_max, y_max, confidence)``.
    Coordinates are returned raw (unvalidated) so callers see malformed output
    exactly as a broken detector would emit it.

    Candidates are the 4-connected components of saturated pixels (channel
    spread above ``min_saturation``) with at least ``min_area`` pixels; the
    component itself is returned as the candidate mask and the fill ratio
    inside its bounding box as the confidence. Passing ``candidates`` as a
    list overrides blob finding with a fixed list.
    """

    def __init__(
        self,
        boxes: Mapping[str, Sequence[float]] | None = None,
        default_box: Sequence[float] | None = None,
        candidates: Sequence[Candidate] | None = None,
        min_saturation: int = 60,
        min_area: int = 16,
        name: str = "mock-detector",
    ):
        self.name = name
        self.boxes = {k: tuple(v) for k, v in (boxes or {}).items()}
        self.default_box = tuple(default_box) if default_box is not None else None
        self.fixed_candidates = None if candidates is None else sort_candidates(candidates)
        self.min_saturation = min_saturation
        self.min_area = min_area
        self.calls: Counter[str] = Counter()

    def predict_box(self, image: SceneImage, category: str):
        self.calls["predict_box"] += 1
        entry = self.boxes.get(category, self.default_box)
        if entry is None:
            raise DetectorFailure(f"no box configured for category {category!r}")
        coords = tuple(entry[:4])
        confidence = float(entry[4]) if len(entry) > 4 else 1.0
        return coords, confidence

    def detect_candidates(self, image: SceneImage) -> list[Candidate]:
        self.calls["detect_candidates"] += 1
        if self.fixed_candidates is not None:
            return list(self.fixed_candidates)
        px = image.pixels.astype(np.int16)
        spread = px.max(axis=2) - px.min(axis=2)
        labels, count = ndimage.label(spread > self.min_saturation)
        found = []
        for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
            if sl is None:
                continue
            component = labels == idx
            area = int(component.sum())
            if area < self.min_area:
                continue
            ys, xs = sl
            box = PlacementBox(xs.start, ys.start, xs.stop, ys.stop)
            mean = image.pixels[component].mean(axis=0)
            label = "#%02x%02x%02x" % tuple(int(round(c)) for c in mean)
            found.append(Candidate(box, label, area / box.area, BinaryMask(image.width, image.height, component)))
        return sort_candidates(found)


# -----------------------------------------------------------------------------
# Generator
# -----------------------------------------------------------------------------

DISC_RADIUS_FRACTION = 0.35
MAX_DISC_CHANNEL = 200


def prompt_color(prompt: str) -> tuple[int, int, int]:
    """Disc colour derived from the prompt hash; channels capped well below white."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return tuple(int(b) * MAX_DISC_CHANNEL // 255 for b in digest[:3])  # type: ignore[return-value]


class MockGenerator(GeneratorBackend):
    """Solid disc on a pure white background, centred, colour = hash(prompt).

    The seed and negative prompt do not change the picture; identical
    requests therefore give byte-identical buffers.
    """

    def __init__(self, name: str = "mock-generator"):
        self.name = name
        self.calls: Counter[str] = Counter()

    def generate(self, prompt: str, negative_prompt: str, seed: int, size: tuple[int, int]) -> SceneImage:
        self.calls["generate"] += 1
        width, height = size
        cx, cy = width / 2.0, height / 2.0
        radius = DISC_RADIUS_FRACTION * min(width, height)
        xs = np.arange(width) + 0.5
        ys = np.arange(height) + 0.5
        inside = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= radius**2
        pixels = np.full((height, width, 3), 255, dtype=np.uint8)
        pixels[inside] = prompt_color(prompt)
        return SceneImage.from_array(pixels)


# -----------------------------------------------------------------------------
# Embedder
# -----------------------------------------------------------------------------


def _colour_features(pixels: np.ndarray) -> np.ndarray:
    px = pixels.astype(np.float64) / 255.0 - 0.5
    h, w = px.shape[:2]
    whole = px.reshape(-1, 3).mean(axis=0)
    feats = []
    for rows in (slice(0, max(1, h // 2)), slice(h // 2, h)):
        for cols in (slice(0, max(1, w // 2)), slice(w // 2, w)):
            block = px[rows, cols]
            feats.append(block.reshape(-1, 3).mean(axis=0) if block.size else whole)
    return np.concatenate(feats + [whole, [1.0]])


class MockEmbedder(EmbedderBackend):
    """Seeded hash projection into a shared unit sphere.

    Images: quadrant and global mean colours projected by a fixed random
    matrix. Texts: a hash-seeded Gaussian direction, unless the text is in
    ``anchors`` (``text -> (r, g, b)``), in which case it embeds exactly like
    a solid image of that colour. Anchors give fixtures controllable
    text/image agreement without any model.
    """

    def __init__(self, dim: int = 64, seed: int = 0, anchors: Mapping[str, Sequence[int]] | None = None,
                 name: str = "mock-embedder"):
        self.name = name
        self.dim = dim
        self.seed = seed
        self.anchors = {k: tuple(int(c) for c in v) for k, v in (anchors or {}).items()}
        self._projection = np.random.default_rng(seed).standard_normal((dim, 16))
        self.calls: Counter[str] = Counter()

    def embed_image(self, image: SceneImage) -> np.ndarray:
        self.calls["embed_image"] += 1
        return self._embed_pixels(image.pixels)

    def _embed_pixels(self, pixels: np.ndarray) -> np.ndarray:
        v = self._projection @ _colour_features(pixels)
        return v / np.linalg.norm(v)

    def embed_text(self, text: str) -> np.ndarray:
        self.calls["embed_text"] += 1
        if text in self.anchors:
            return self._embed_pixels(np.array(self.anchors[text], dtype=np.uint8).reshape(1, 1, 3))
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)


def describe_script(script: Mapping[str, Any]) -> dict[str, Any]:
    """JSON-safe view of a script (callables shown by qualified name)."""
    out = {}
    for k, v in script.items():
        out[k] = getattr(v, "__qualname__", repr(v)) if callable(v) else v
    return out
