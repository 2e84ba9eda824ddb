"""Model backend interfaces.

The pipeline only ever talks to these four interfaces; concrete backends are
picked by name in the run config (see :mod:`scenefit.backends.registry`).
Each backend carries a small descriptor: ``name``, ``deterministic`` and
``max_concurrency`` (``None`` means concurrent calls are fine).
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scenefit.errors import NormViolation
from scenefit.scene_model import BinaryMask, PlacementBox, SceneImage

UNIT_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Candidate:
    """One detector proposal. ``mask`` is set when the detector segments."""

    box: PlacementBox
    label: str
    confidence: float
    mask: BinaryMask | None = None


def candidate_sort_key(c: Candidate):
    # descending confidence, then larger area, then smaller x_min / y_min
    return (-c.confidence, -c.box.area, c.box.x_min, c.box.y_min)


def sort_candidates(candidates: Sequence[Candidate]) -> list[Candidate]:
    return sorted(candidates, key=candidate_sort_key)


class Backend(abc.ABC):
    name: str = "backend"
    deterministic: bool = True
    max_concurrency: int | None = None

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "deterministic": self.deterministic,
            "max_concurrency": self.max_concurrency,
        }


class VlmBackend(Backend):
    @abc.abstractmethod
    def answer(self, image: SceneImage, prompt: str) -> str:
        """Return the model's free-text answer to ``prompt`` about ``image``."""


class DetectorBackend(Backend):
    @abc.abstractmethod
    def predict_box(self, image: SceneImage, category: str):
        """Return ``(box, confidence)``.

        ``box`` is a :class:`PlacementBox` or a raw ``(x_min, y_min, x_max,
        y_max)`` sequence; callers validate it.
        """

    @abc.abstractmethod
    def detect_candidates(self, image: SceneImage) -> list[Candidate]:
        """Return proposals sorted by :func:`candidate_sort_key`."""


class GeneratorBackend(Backend):
    @abc.abstractmethod
    def generate(
        self, prompt: str, negative_prompt: str, seed: int, size: tuple[int, int]
    ) -> SceneImage:
        """Render an image of ``size = (width, height)``."""


class EmbedderBackend(Backend):
    @abc.abstractmethod
    def embed_image(self, image: SceneImage) -> np.ndarray:
        """Unit-norm embedding of an image."""

    @abc.abstractmethod
    def embed_text(self, text: str) -> np.ndarray:
        """Unit-norm embedding of a text, in the same space as images."""


def cosine_similarity(a, b) -> float:
    """Dot product of two unit vectors, clipped to [-1, 1].

    Raises:
        NormViolation: either input is not unit-norm within 1e-6.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for name, v in (("a", a), ("b", b)):
        norm = float(np.linalg.norm(v))
        if not abs(norm - 1.0) <= UNIT_NORM_TOLERANCE:
            raise NormViolation(f"{name} has norm {norm!r}, expected 1 within {UNIT_NORM_TOLERANCE}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


@dataclass
class BackendSet:
    """The four backends one pipeline run uses."""

    vlm: VlmBackend | None = None
    detector: DetectorBackend | None = None
    generator: GeneratorBackend | None = None
    embedder: EmbedderBackend | None = None

    def descriptors(self) -> dict[str, dict]:
        return {
            kind: b.descriptor()
            for kind, b in (("vlm", self.vlm), ("detector", self.detector),
                            ("generator", self.generator), ("embedder", self.embedder))
            if b is not None
        }

    def max_workers(self, requested: int) -> int:
        """Cap a worker count by the strictest backend concurrency limit."""
        limits = [b.max_concurrency for b in (self.vlm, self.detector, self.generator, self.embedder)
                  if b is not None and b.max_concurrency is not None]
        return max(1, min([requested, *limits]))
