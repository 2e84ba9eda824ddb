import itertools
import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenefit.backends import (
    BackendSet,
    Candidate,
    MockDetector,
    MockEmbedder,
    MockGenerator,
    MockVlm,
    build_backend,
    cosine_similarity,
    sort_candidates,
)
from scenefit.backends.http import OpenAICompatibleVlm, call_with_retries
from scenefit.backends.mock import DISC_RADIUS_FRACTION, glob_to_regex, globs_overlap, prompt_color
from scenefit.errors import (
    AmbiguousScript,
    ConfigError,
    DetectorFailure,
    NormViolation,
    ProviderError,
    RateLimited,
    UnscriptedPrompt,
)
from scenefit.scene_model import PlacementBox, SceneImage

from conftest import random_scene

# -- glob scripts ---------------------------------------------------------------

patterns = st.text(alphabet="ab*?", max_size=4)


def _witness_exists(p: str, q: str) -> bool:
    rp, rq = glob_to_regex(p), glob_to_regex(q)
    for n in range(len(p) + len(q) + 1):
        for chars in itertools.product("ab", repeat=n):
            s = "".join(chars)
            if rp.fullmatch(s) and rq.fullmatch(s):
                return True
    return False


@settings(max_examples=300)
@given(patterns, patterns)
def test_glob_overlap_matches_brute_force(p, q):
    assert globs_overlap(p, q) == _witness_exists(p, q)


def test_glob_treats_regex_characters_literally():
    assert glob_to_regex("a.b(c)").fullmatch("a.b(c)")
    assert not glob_to_regex("a.b").fullmatch("axb")


def test_mock_vlm_rejects_overlapping_patterns():
    with pytest.raises(AmbiguousScript):
        MockVlm({"Look*": "x", "*scene*": "y"})


def test_mock_vlm_answers_and_counts():
    img = random_scene(np.random.default_rng(0))
    vlm = MockVlm({"hello *": "hi", "bye": {"by_image": ["a", "b"]}})
    assert vlm.answer(img, "hello there") == "hi"
    assert vlm.answer(img, "bye") in ("a", "b")
    assert vlm.answer(img, "bye") == vlm.answer(img, "bye")
    with pytest.raises(UnscriptedPrompt):
        vlm.answer(img, "other")
    assert vlm.calls["answer"] == 5


def test_mock_vlm_by_digest():
    a, b = random_scene(np.random.default_rng(1)), random_scene(np.random.default_rng(2))
    vlm = MockVlm({"q": {"by_digest": {a.digest(): "for a"}, "default": "other"}})
    assert vlm.answer(a, "q") == "for a"
    assert vlm.answer(b, "q") == "other"
    strict = MockVlm({"q": {"by_digest": {a.digest(): "for a"}}})
    with pytest.raises(UnscriptedPrompt):
        strict.answer(b, "q")


# -- detector ---------------------------------------------------------------------


def test_detector_returns_raw_boxes():
    det = MockDetector(boxes={"Food": [5, 5, 1, 9, 0.5]})
    img = random_scene(np.random.default_rng(0))
    assert det.predict_box(img, "Food") == ((5, 5, 1, 9), 0.5)
    with pytest.raises(DetectorFailure):
        det.predict_box(img, "Drinks")


def test_detector_blobs_hand_counted():
    px = np.full((20, 30, 3), 128, np.uint8)
    px[2:6, 3:9] = (255, 0, 0)  # 24 px red
    px[10:18, 20:25] = (0, 0, 255)  # 40 px blue
    px[15:17, 2:4] = (0, 255, 0)  # 4 px: below min_area
    cands = MockDetector().detect_candidates(SceneImage.from_array(px))
    assert [c.box.as_tuple() for c in cands] == [(20, 10, 25, 18), (3, 2, 9, 6)]
    assert [c.mask.area for c in cands] == [40, 24]
    assert all(c.confidence == 1.0 for c in cands)
    assert cands[0].label == "#0000ff"


def test_candidate_order_total():
    b1, b2 = PlacementBox(0, 0, 2, 2), PlacementBox(5, 0, 9, 4)
    cands = [Candidate(b1, "x", 0.5), Candidate(b2, "y", 0.5), Candidate(b1, "z", 0.9)]
    assert [c.label for c in sort_candidates(cands)] == ["z", "y", "x"]


# -- generator ----------------------------------------------------------------------


def test_generator_disc_pixel_count_and_colour():
    img = MockGenerator().generate("p", "n", 0, (40, 30))
    inside = (img.pixels != 255).any(axis=2)
    ys, xs = np.mgrid[0:30, 0:40] + 0.5
    oracle = (xs - 20) ** 2 + (ys - 15) ** 2 <= (DISC_RADIUS_FRACTION * 30) ** 2
    assert np.array_equal(inside, oracle)
    assert tuple(img.pixels[15, 20]) == prompt_color("p")
    assert max(prompt_color("anything")) <= 200


def test_generator_is_deterministic():
    g = MockGenerator()
    assert g.generate("x", "", 1, (16, 16)) == g.generate("x", "", 2, (16, 16))
    assert g.calls["generate"] == 2


# -- embedder -------------------------------------------------------------------------


@given(st.text(max_size=20))
def test_text_embeddings_unit_norm(text):
    v = MockEmbedder().embed_text(text)
    assert abs(np.linalg.norm(v) - 1) < 1e-9


def test_anchor_text_matches_solid_colour_image():
    emb = MockEmbedder(anchors={"red thing": (200, 10, 10)})
    img = SceneImage.from_array(np.tile(np.array([200, 10, 10], np.uint8), (6, 6, 1)))
    assert cosine_similarity(emb.embed_image(img), emb.embed_text("red thing")) == pytest.approx(1.0)


def test_cosine_rejects_non_unit_vectors():
    with pytest.raises(NormViolation):
        cosine_similarity([1.0, 1.0], [1.0, 0.0])
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_backend_set_worker_cap():
    vlm = MockVlm({"x": "y"})
    vlm.max_concurrency = 2
    assert BackendSet(vlm=vlm).max_workers(8) == 2
    assert BackendSet(vlm=MockVlm({"x": "y"})).max_workers(3) == 3
    assert BackendSet().max_workers(0) == 1


# -- http ---------------------------------------------------------------------------------


def _vlm(handler, **kw):
    return OpenAICompatibleVlm("http://test/v1", "m", transport=httpx.MockTransport(handler), sleep=lambda s: None,
                               **kw)


def test_http_vlm_sends_image_and_prompt():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"message": {"content": "Food, Drinks, FMCG"}}]})

    out = _vlm(handler).answer(random_scene(np.random.default_rng(0)), "prompt text")
    assert out == "Food, Drinks, FMCG"
    content = seen["messages"][0]["content"]
    assert content[0]["image_url"]["url"].startswith("data:image/png;base64,")
    assert content[1]["text"] == "prompt text"
    assert seen["temperature"] == 0.0


def test_http_vlm_retries_server_errors_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503, text="busy")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    assert _vlm(handler, retries=2).answer(random_scene(np.random.default_rng(0)), "p") == "ok"
    assert len(calls) == 3


def test_http_vlm_client_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad")

    with pytest.raises(ProviderError):
        _vlm(handler).answer(random_scene(np.random.default_rng(0)), "p")
    assert len(calls) == 1


def test_http_vlm_missing_key(monkeypatch):
    monkeypatch.delenv("NO_SUCH_KEY", raising=False)
    vlm = _vlm(lambda r: httpx.Response(200, json={}), api_key_env="NO_SUCH_KEY")
    with pytest.raises(ProviderError):
        vlm.answer(random_scene(np.random.default_rng(0)), "p")


def test_call_with_retries_gives_up():
    attempts = []

    def fn():
        attempts.append(1)
        raise RateLimited("slow down")

    with pytest.raises(RateLimited):
        call_with_retries(fn, retries=2, sleep=lambda s: None)
    assert len(attempts) == 3


# -- registry ----------------------------------------------------------------------------


def test_registry_builds_mocks(tmp_path):
    (tmp_path / "s.json").write_text('{"a": "b"}')
    vlm = build_backend("vlm", {"type": "mock", "script": "s.json", "name": "v1"}, tmp_path)
    assert vlm.name == "v1" and vlm.answer(random_scene(np.random.default_rng(0)), "a") == "b"
    assert isinstance(build_backend("generator", {"type": "mock"}), MockGenerator)
    target = {"type": "python", "target": "scenefit.backends.mock:MockEmbedder", "kwargs": {"dim": 8}}
    assert build_backend("embedder", target).dim == 8


@pytest.mark.parametrize(
    "kind,section",
    [
        ("vlm", {"type": "nope"}),
        ("vlm", {"type": "mock", "script": "missing.json"}),
        ("detector", {"type": "openai-compatible"}),
        ("embedder", {"type": "python", "target": "no_such_module:X"}),
        ("ranker", {"type": "mock"}),
    ],
)
def test_registry_rejects_bad_sections(tmp_path, kind, section):
    with pytest.raises(ConfigError):
        build_backend(kind, section, tmp_path)
