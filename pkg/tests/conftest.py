import numpy as np
import pytest

from scenefit import fixtures
from scenefit.backends import MockDetector, MockEmbedder, MockGenerator, MockVlm
from scenefit.backends.base import BackendSet
from scenefit.scene_model import SceneImage, load_dataset, load_sponsor_registry


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The full synthetic fixture corpus, built once per session."""
    return fixtures.build_all(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def records_a(corpus):
    return load_dataset(corpus.dataset_a, "A")


@pytest.fixture(scope="session")
def records_b(corpus):
    return load_dataset(corpus.dataset_b, "B")


@pytest.fixture(scope="session")
def sponsors(corpus):
    return load_sponsor_registry(corpus.sponsors)


@pytest.fixture
def script(corpus):
    import json

    return json.loads(corpus.vlm_script.read_text())


@pytest.fixture
def mock_backends(script):
    return BackendSet(
        vlm=MockVlm(script),
        detector=MockDetector(boxes=fixtures.detector_boxes()),
        generator=MockGenerator(),
        embedder=MockEmbedder(anchors=fixtures.embedder_anchors()),
    )


def random_scene(rng: np.random.Generator, width: int = 32, height: int = 24) -> SceneImage:
    return SceneImage.from_array(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
