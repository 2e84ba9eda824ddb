import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenefit.backends import MockVlm
from scenefit.errors import (
    EmptyResponse,
    EmptyTaxonomy,
    MultiLineResponse,
    NoListedObject,
    StageError,
    UnknownCategory,
    UnparseableResponse,
)
from scenefit.prompts import load_templates
from scenefit.scene_model import CategoryTaxonomy, PlacementBox, draw_box
from scenefit.suggestion import (
    FINDABLE_OBJECTS,
    MAX_OBJECT_PHRASE,
    UNRANKED,
    TaxonomyWarning,
    build_category_prompt,
    clean_category_items,
    clean_object_response,
    parse_branded_response,
    parse_category_response,
    parse_single_stage_response,
    single_stage_suggest,
    two_stage_suggest,
)

from conftest import random_scene
from parser_cases import CATEGORY_PARSER_CASES

TAX = CategoryTaxonomy.default()
CAT_GLOB = "Look at the scene in the image. An object should be placed in the blue box. From the following list, *"
OBJ_GLOB = "The image shows a scene. Considering this scene, suggest a specific object for the category "


@pytest.mark.parametrize("response,expected", CATEGORY_PARSER_CASES)
def test_category_parser_table(response, expected):
    if isinstance(expected, list):
        assert parse_category_response(response, TAX) == expected
    else:
        with pytest.raises(expected):
            parse_category_response(response, TAX)


@given(st.permutations(list(TAX)).map(lambda p: p[:3]), st.sampled_from([", ", "\n", "; "]))
def test_clean_list_roundtrip(cats, sep):
    assert parse_category_response(sep.join(cats), TAX) == cats


def test_category_prompt_lists_taxonomy_and_warns_when_small():
    prompt = build_category_prompt(TAX)
    assert "Food, Drinks, Electronics, FMCG, Cosmetics, Computers" in prompt
    with pytest.warns(TaxonomyWarning):
        small = build_category_prompt(CategoryTaxonomy(("Food", "Drinks")))
    assert "Categories: Food, Drinks." in small and "three best category" in small
    with pytest.raises(EmptyTaxonomy):
        build_category_prompt(CategoryTaxonomy(()))


def test_clean_items_strip_markers():
    assert clean_category_items("1. *Food*\n2) Drinks") == ["Food", "Drinks"]


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("a can of Coke", "a can of Coke"),
        ('"A bottle of water."', "A bottle of water"),
        ("Object: a bluetooth speaker", "a bluetooth speaker"),
        ("  a laptop  ", "a laptop"),
    ],
)
def test_object_cleanup(raw, expected):
    assert clean_object_response(raw) == expected


def test_object_cleanup_rejects_empty_and_multiline():
    with pytest.raises(EmptyResponse):
        clean_object_response("  ")
    with pytest.raises(MultiLineResponse):
        clean_object_response("a cup\na plate")


def test_long_object_phrase_truncated_at_word_boundary():
    phrase = clean_object_response("a " + "very " * 30 + "long lamp")
    assert len(phrase) <= MAX_OBJECT_PHRASE
    assert not phrase.endswith(" ") and phrase.startswith("a very")


def test_two_stage_uses_both_prompts_and_rank_override():
    vlm = MockVlm({CAT_GLOB: "Drinks, Food, FMCG", OBJ_GLOB + "'Drinks' *": "a can of Coke",
                   OBJ_GLOB + "'Food' *": "a sandwich", OBJ_GLOB + "'FMCG' *": "a bar of soap"})
    img = random_scene(np.random.default_rng(0))
    r = two_stage_suggest(img, TAX, vlm)
    assert (r.chosen_category, r.object_phrase) == ("Drinks", "a can of Coke")
    assert r.ranked_categories == ("Drinks", "Food", "FMCG")
    assert len(r.raw_responses) == 2
    assert two_stage_suggest(img, TAX, vlm, rank=2).object_phrase == "a bar of soap"


def test_two_stage_stage1_failure_skips_stage2():
    vlm = MockVlm({CAT_GLOB: "Drinks, Food", OBJ_GLOB + "*": "x"})
    with pytest.raises(StageError) as info:
        two_stage_suggest(random_scene(np.random.default_rng(0)), TAX, vlm)
    assert info.value.stage == 1 and isinstance(info.value.cause, UnparseableResponse)
    assert vlm.calls["answer"] == 1


def test_two_stage_stage2_failure_tagged():
    vlm = MockVlm({CAT_GLOB: "Drinks, Food, FMCG", OBJ_GLOB + "*": ""})
    with pytest.raises(StageError) as info:
        two_stage_suggest(random_scene(np.random.default_rng(0)), TAX, vlm)
    assert info.value.stage == 2


def test_box_is_drawn_into_prompt_image():
    img = random_scene(np.random.default_rng(0))
    box = PlacementBox(2, 2, 12, 12)
    marked = draw_box(img, box)
    vlm = MockVlm({CAT_GLOB: {"by_digest": {marked.digest(): "Food, Drinks, FMCG"}}, OBJ_GLOB + "*": "a sandwich"})
    assert two_stage_suggest(img, TAX, vlm, box=box).chosen_category == "Food"


def test_single_stage_parsing():
    assert parse_single_stage_response("Drinks: a can of Coke.", TAX) == ("Drinks", "a can of Coke")
    assert parse_single_stage_response("a can of Coke", TAX) == (UNRANKED, "a can of Coke")
    with pytest.raises(UnknownCategory):
        parse_single_stage_response("Furniture: a chair", TAX)
    with pytest.raises(UnparseableResponse):
        parse_single_stage_response("Drinks:", TAX)


def test_single_stage_suggest_one_call():
    vlm = MockVlm({"Look at the scene in the image. An object should be placed in the blue box. From the following "
                   "list of*": "drinks: a bottle of water"})
    r = single_stage_suggest(random_scene(np.random.default_rng(0)), TAX, vlm)
    assert r.ranked_categories == ("Drinks", UNRANKED, UNRANKED)
    assert r.strategy == "single" and vlm.calls["answer"] == 1


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("shampoo bottle on the counter PANTENE", ("shampoo bottle", "on the counter", "PANTENE")),
        ("Soda can, next to the laptop: Coca Cola", ("soda can", "next to the laptop", "Coca Cola")),
        ("the coffee cup at bottom left starbucks", ("coffee cup", "at bottom left", "starbucks")),
        ("T-shirt on the chair Nike", ("tshirt", "on the chair", "Nike")),
        ("shoes near the door Adidas", ("shoes", "near the door", "Adidas")),
    ],
)
def test_branded_parser(raw, expected):
    f = parse_branded_response(raw)
    assert (f.object_name, f.location_phrase, f.brand) == expected


def test_branded_parser_errors():
    with pytest.raises(NoListedObject):
        parse_branded_response("a potted plant Ikea")
    with pytest.raises(UnparseableResponse):
        parse_branded_response("shampoo bottle")


def test_branded_prompt_lists_every_findable_object():
    prompt = load_templates()["branded_object"]
    assert all(name in prompt for name in FINDABLE_OBJECTS)
