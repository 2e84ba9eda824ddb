import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenefit.backends import Candidate, MockDetector, MockEmbedder, MockGenerator, MockVlm
from scenefit.backends.base import BackendSet
from scenefit.errors import EmptyCandidates, EmptyInput, EmptyMask, StageError
from scenefit.scene_model import BinaryMask, PlacementBox, SceneImage, SponsorSpec, Variant
from scenefit.sponsor import (
    SPONSOR_STAGES,
    RegionScore,
    SponsorDecision,
    SponsorSettings,
    detect_sponsor_presence,
    logo_box_for_mask,
    place_logo,
    region_sort_key,
    run_sponsor_pipeline,
    score_regions,
    select_region,
)
from scenefit.suggestion import BrandedObjectFinding

from conftest import random_scene

SPEC = SponsorSpec("acme", "a red bottle", logo_prompt="acme logo", product_keywords=("shampoo bottle",))

def _solid(rgb, w=8, h=8):
    return SceneImage.from_array(np.tile(np.array(rgb, np.uint8), (h, w, 1)))


# -- presence -------------------------------------------------------------------------------


@pytest.mark.parametrize(
    "answer,present,sponsor",
    [
        ("shampoo bottle on the shelf Pantene", True, "acme"),
        ("soda can on the table Fizz", False, None),
        ("a potted plant", False, None),
        ("shampoo bottle", None, None),
    ],
)
def test_presence_decision(answer, present, sponsor):
    d = detect_sponsor_presence(_solid((9, 9, 9)), [SPEC], MockVlm({"*": answer}))
    assert (d.present, d.sponsor_id) == (present, sponsor)


def test_presence_requires_sponsors():
    with pytest.raises(EmptyInput):
        detect_sponsor_presence(_solid((9, 9, 9)), [], MockVlm({"*": "x"}))


def test_decision_finding_only_when_present():
    f = BrandedObjectFinding("shampoo bottle", "on the shelf", "Pantene")
    with pytest.raises(ValueError):
        SponsorDecision(False, finding=f)


# -- scoring -------------------------------------------------------------------------------------


def _scene_two_patches():
    px = np.full((20, 20, 3), 128, np.uint8)
    px[2:8, 2:8] = (200, 10, 10)
    px[10:18, 10:18] = (10, 200, 10)
    return SceneImage.from_array(px)


def test_scores_rank_matching_crop_first_and_clamp():
    emb = MockEmbedder(anchors={"a red bottle": (200, 10, 10)})
    cands = [Candidate(PlacementBox(10, 10, 18, 18), "g", 0.9), Candidate(PlacementBox(-5, -5, 8, 8), "r", 0.1)]
    scores = score_regions(_scene_two_patches(), cands, SPEC, emb)
    assert [s.label for s in scores] == ["r", "g"]
    assert scores[0].clip_similarity > scores[1].clip_similarity
    with pytest.raises(EmptyCandidates):
        score_regions(_scene_two_patches(), [], SPEC, emb)


def test_tie_rule():
    box_a, box_b = PlacementBox(4, 0, 8, 4), PlacementBox(0, 0, 4, 4)
    same = [RegionScore(box_a, "a", 0.5, 0.3), RegionScore(box_b, "b", 0.5, 0.3)]
    assert min(same, key=region_sort_key).label == "b"
    bigger = [RegionScore(box_b, "b", 0.5, 0.3), RegionScore(PlacementBox(0, 0, 9, 9), "c", 0.5, 0.3)]
    assert min(bigger, key=region_sort_key).label == "c"
    conf = [RegionScore(box_b, "b", 0.4, 0.3), RegionScore(box_a, "a", 0.9, 0.3)]
    assert min(conf, key=region_sort_key).label == "a"


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=8), st.floats(0.01, 10))
def test_argmax_invariant_to_positive_scaling(sims, k):
    scores = [RegionScore(PlacementBox(i, 0, i + 1, 1), str(i), 0.5, s) for i, s in enumerate(sims)]
    scaled = [RegionScore(s.box, s.label, 0.5, s.clip_similarity * k) for s in scores]
    assert min(scores, key=region_sort_key).label == min(scaled, key=region_sort_key).label


# -- selection ---------------------------------------------------------------------------------------


def test_select_region_box_inset_hand_rasterized():
    scores = [RegionScore(PlacementBox(2, 2, 6, 6), "x", 1.0, 0.9)]
    box, mask = select_region(scores, (8, 8), inset=1)
    expected = np.zeros((8, 8), bool)
    expected[3:5, 3:5] = True
    assert box == PlacementBox(2, 2, 6, 6) and np.array_equal(mask.bits, expected)
    # default inset: 10% of the smaller side (0.4 px) keeps the whole 4x4 box
    _, mask = select_region(scores, (8, 8))
    assert mask.area == 16


def test_select_region_prefers_detector_mask():
    bits = np.zeros((8, 8), bool)
    bits[3, 3:5] = True
    det_mask = BinaryMask(8, 8, bits)
    scores = [RegionScore(PlacementBox(2, 2, 6, 6), "x", 1.0, 0.9, det_mask)]
    assert select_region(scores, (8, 8))[1] == det_mask
    assert select_region(scores, (8, 8), use_detector_mask=False)[1].area == 16


def test_logo_box_scaled_about_centre():
    mask = BinaryMask.from_box(PlacementBox(2, 4, 12, 8), 16, 16)
    assert logo_box_for_mask(mask, 0.5).as_tuple() == (4.5, 5.0, 9.5, 7.0)
    with pytest.raises(EmptyMask):
        logo_box_for_mask(BinaryMask(4, 4, np.zeros((4, 4), bool)))


# -- logo placement ------------------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["alpha", "seamless"])
def test_place_logo_only_changes_mask_pixels(mode):
    scene = random_scene(np.random.default_rng(0), 32, 32)
    bits = np.zeros((32, 32), bool)
    bits[8:24, 10:20] = True
    bits[12:14, 12:16] = False
    mask = BinaryMask(32, 32, bits)
    out = place_logo(scene, mask, PlacementBox(6, 6, 26, 26), SPEC, MockGenerator(), mode,
                     SponsorSettings(logo_size=(32, 32), logo_scale=1.0))
    changed = (out.pixels != scene.pixels).any(axis=2)
    assert changed.any() and not (changed & ~bits).any()


def test_place_logo_empty_region():
    scene = random_scene(np.random.default_rng(0))
    mask = BinaryMask.from_box(PlacementBox(0, 0, 4, 4), scene.width, scene.height)
    with pytest.raises(EmptyMask):
        place_logo(scene, mask, PlacementBox(10, 10, 14, 14), SPEC, MockGenerator())


# -- pipeline -------------------------------------------------------------------------------------------


def test_gated_images_untouched_with_no_generator_calls(records_b, sponsors, mock_backends):
    for rec in records_b:
        if rec.variant is not Variant.NO_SPONSOR_PRODUCT:
            continue
        img = rec.load_image()
        out = run_sponsor_pipeline(img, sponsors, mock_backends)
        assert out.decision.present is False and out.image == img
        assert tuple(out.stage_artifacts) == ("00_scene", "02_final")
    assert mock_backends.generator.calls["generate"] == 0


def test_product_images_branded_inside_mask(records_b, sponsors, mock_backends):
    rec = next(r for r in records_b if r.variant is Variant.PRODUCT_NO_LOGO)
    img = rec.load_image()
    out = run_sponsor_pipeline(img, sponsors, mock_backends, settings=SponsorSettings(logo_size=(64, 64)))
    assert out.decision.present and out.decision.sponsor_id == rec.sponsor_id
    assert tuple(out.stage_artifacts) == SPONSOR_STAGES
    changed = (out.image.pixels != img.pixels).any(axis=2)
    assert changed.any() and not (changed & ~out.selected_mask.bits).any()
    again = run_sponsor_pipeline(img, sponsors, mock_backends, settings=SponsorSettings(logo_size=(64, 64)))
    assert again.image == out.image and again.to_dict() == out.to_dict()


def test_pipeline_stage_error_tags():
    backends = BackendSet(vlm=MockVlm({"*": "shampoo bottle on the shelf X"}), detector=MockDetector(),
                          generator=MockGenerator(), embedder=MockEmbedder())
    with pytest.raises(StageError) as info:
        run_sponsor_pipeline(SceneImage.from_array(np.full((8, 8, 3), 128, np.uint8)), [SPEC], backends)
    assert info.value.stage == "score" and isinstance(info.value.cause, EmptyCandidates)
