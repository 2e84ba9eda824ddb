from scenefit.backends.base import (
    Backend,
    BackendSet,
    Candidate,
    DetectorBackend,
    EmbedderBackend,
    GeneratorBackend,
    VlmBackend,
    cosine_similarity,
    sort_candidates,
)
from scenefit.backends.mock import MockDetector, MockEmbedder, MockGenerator, MockVlm
from scenefit.backends.registry import build_backend

__all__ = [
    "Backend",
    "BackendSet",
    "Candidate",
    "DetectorBackend",
    "EmbedderBackend",
    "GeneratorBackend",
    "VlmBackend",
    "cosine_similarity",
    "sort_candidates",
    "MockDetector",
    "MockEmbedder",
    "MockGenerator",
    "MockVlm",
    "build_backend",
]
