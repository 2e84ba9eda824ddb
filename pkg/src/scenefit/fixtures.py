"""Synthetic fixture corpus for tests, demos and the acceptance run.

Everything is generated from fixed seeds, so two builds into different
directories are byte-identical. :func:`build_all` writes:

* ``dataset_a.jsonl`` + ``images_a/``: 10 scenes for object insertion.
* ``dataset_b.jsonl`` + ``images_b/``: 9 scenes, 3 per sponsor variant.
* ``sponsors.jsonl``: the sponsor registry.
* ``vlm_collapse.json``: the mock VLM script. It answers the single-stage
  prompt with the same generic object everywhere (mode collapse), the
  two-stage prompts with per-category objects, and the branded-object
  prompt per Dataset B image.
* ``invalid/``: one file per crafted schema violation.
* ``config.yaml``: a mock-backend run config over all of the above.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import yaml

from scenefit.scene_model import (
    BinaryMask,
    DatasetRecordA,
    DatasetRecordB,
    PlacementBox,
    SceneImage,
    SponsorSpec,
    Variant,
    canonical_json,
    draw_box,
    write_dataset,
)

SCENE_SIZE = 64
GENERATION_SIZE = 64

# (locale, plausible categories, gt box, safety flags)
SCENES_A = (
    ("Bathroom", ("Cosmetics", "FMCG"), (22, 30, 42, 46), ()),
    ("Bathroom", ("Cosmetics",), (8, 28, 26, 44), ()),
    ("Bathroom", ("FMCG", "Cosmetics"), (36, 26, 56, 44), ("children",)),
    ("Kitchen", ("Food", "Drinks"), (18, 30, 40, 48), ()),
    ("Kitchen", ("Drinks",), (30, 32, 50, 50), ("alcohol",)),
    ("Office", ("Computers", "Electronics"), (14, 24, 44, 46), ()),
    ("Office", ("Electronics",), (40, 28, 58, 44), ()),
    ("Living room", ("Electronics", "Drinks"), (10, 30, 30, 50), ()),
    ("Bar", ("Drinks", "Food"), (24, 30, 44, 48), ("alcohol",)),
    ("Cafe", ("Food", "Drinks"), (20, 32, 38, 50), ()),
)

# Ranked category answers, deliberately messy; the last one ranks a
# non-plausible category first.
CATEGORY_ANSWERS = (
    "Cosmetics, FMCG, Drinks",
    "1. Cosmetics 2. FMCG 3. Food",
    "fmcg; cosmetics; drinks.",
    "Food, Drinks, FMCG",
    "Drinks, Food, FMCG",
    "**Computers**, Electronics, FMCG",
    "Categories: Electronics, Computers, Drinks",
    "Electronics, Drinks, Food",
    "Food, Drinks, FMCG",
    "Cosmetics, Food, Drinks",
)

OBJECTS_BY_CATEGORY = {
    "Food": ["a plate of croissants", "a bowl of fruit", "a sandwich"],
    "Drinks": ["a can of Coke", "a bottle of water", "a glass of orange juice"],
    "Electronics": ["a bluetooth speaker", "a smartphone", "a desk lamp"],
    "FMCG": ["a box of tissues", "a roll of paper towels", "a bar of soap"],
    "Cosmetics": ["a bottle of hand cream", "a lipstick", "a jar of face cream"],
    "Computers": ["a laptop", "a wireless keyboard", "a computer mouse"],
}

# Single-stage answers: the same generic object over and over.
COLLAPSED_ANSWERS = ["Drinks: a bottle of water", "Drinks: A bottle of water.", "Food: a sandwich"]

PRODUCT_COLOR = (220, 40, 150)
DISTRACTOR_COLOR = (40, 170, 60)
WRONG_LOGO_COLOR = (250, 220, 20)

SPONSORS = (
    SponsorSpec(
        sponsor_id="lumina",
        product_description="a magenta shampoo bottle",
        logo_prompt="the Lumina haircare logo",
        product_keywords=("shampoo bottle",),
    ),
    SponsorSpec(
        sponsor_id="fizz",
        product_description="a red soda can",
        logo_prompt="the Fizz soda logo",
        product_keywords=("soda can",),
    ),
)

NO_PRODUCT_ANSWERS = (
    "potted plant on the windowsill Ikea",
    "towel on the rail",
    "toothbrush next to the sink Oral",
)
PRODUCT_ANSWER = "shampoo bottle on the left of the counter Lumina"


# -----------------------------------------------------------------------------
# Scene synthesis
# -----------------------------------------------------------------------------


def _backdrop(rng: np.random.Generator, size: int = SCENE_SIZE) -> np.ndarray:
    """Low-saturation wall/floor scene with mild noise."""
    wall = rng.integers(150, 200)
    floor = rng.integers(90, 130)
    img = np.empty((size, size, 3), dtype=np.float64)
    horizon = size // 2 + int(rng.integers(-4, 5))
    rows = np.arange(size)[:, None]
    img[...] = np.where(rows < horizon, wall, floor)[..., None]
    img += np.linspace(-10, 10, size)[None, :, None]
    img += rng.normal(0, 3, size=(size, size, 1))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _rect_mask(x0: int, y0: int, x1: int, y1: int, size: int = SCENE_SIZE) -> np.ndarray:
    bits = np.zeros((size, size), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return bits


def scene_a(index: int) -> tuple[np.ndarray, tuple[BinaryMask, ...]]:
    """Scene ``index`` of Dataset A plus its (tagged) object masks."""
    rng = np.random.default_rng(1000 + index)
    img = _backdrop(rng)
    # One neutral "furniture" object, tagged important on even scenes.
    x0 = int(rng.integers(2, 10)) if index % 2 else int(rng.integers(44, 52))
    y0 = int(rng.integers(6, 14))
    bits = _rect_mask(x0, y0, x0 + 10, y0 + 14)
    img[bits] = (70, 70, 80)
    tags = frozenset({"important"}) if index % 2 == 0 else frozenset()
    return img, (BinaryMask(SCENE_SIZE, SCENE_SIZE, bits, tags),)


def scene_b(index: int, variant: Variant) -> tuple[np.ndarray, BinaryMask | None]:
    """Scene ``index`` of Dataset B and the product mask (None without product)."""
    rng = np.random.default_rng(2000 + index)
    img = _backdrop(rng)
    if variant is Variant.NO_SPONSOR_PRODUCT:
        # a grey, unsaturated object only
        x0 = int(rng.integers(8, 40))
        img[_rect_mask(x0, 30, x0 + 12, 50)] = (120, 118, 115)
        return img, None
    x0, y0 = int(rng.integers(6, 20)), int(rng.integers(22, 30))
    product = _rect_mask(x0, y0, x0 + 14, y0 + 24)
    img[product] = PRODUCT_COLOR
    if variant is Variant.PRODUCT_WRONG_LOGO:
        img[_rect_mask(x0 + 4, y0 + 8, x0 + 10, y0 + 14)] = WRONG_LOGO_COLOR
    # distractor: a smaller green item to the right
    dx = int(rng.integers(40, 50))
    img[_rect_mask(dx, 36, dx + 8, 50)] = DISTRACTOR_COLOR
    return img, BinaryMask(SCENE_SIZE, SCENE_SIZE, product)


# -----------------------------------------------------------------------------
# Writers
# -----------------------------------------------------------------------------


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def build_dataset_a(root: Path) -> tuple[Path, list[DatasetRecordA], list[SceneImage]]:
    (root / "images_a").mkdir(parents=True, exist_ok=True)
    records, images = [], []
    for i, (locale, cats, box, flags) in enumerate(SCENES_A):
        pixels, masks = scene_a(i)
        rel = f"images_a/scene_{i:02d}.png"
        image = SceneImage.from_array(pixels)
        image.save(root / rel)
        records.append(DatasetRecordA(rel, cats, PlacementBox(*box), locale, frozenset(flags), masks, root))
        images.append(image)
    path = root / "dataset_a.jsonl"
    write_dataset(path, records)
    return path, records, images


def build_dataset_b(root: Path) -> tuple[Path, list[DatasetRecordB], list[SceneImage]]:
    (root / "images_b").mkdir(parents=True, exist_ok=True)
    records, images = [], []
    for i in range(9):
        variant = list(Variant)[i % 3]
        pixels, mask = scene_b(i, variant)
        rel = f"images_b/scene_{i:02d}.png"
        image = SceneImage.from_array(pixels)
        image.save(root / rel)
        if mask is None:
            rec = DatasetRecordB(rel, variant, "shampoo", root=root)
        else:
            x0, y0, x1, y1 = mask.bounding_rect()
            rec = DatasetRecordB(rel, variant, "shampoo", PlacementBox(x0, y0, x1, y1), mask, "lumina", root=root)
        records.append(rec)
        images.append(image)
    path = root / "dataset_b.jsonl"
    write_dataset(path, records)
    return path, records, images


def collapse_vlm_script(
    images_a: list[SceneImage], images_b: list[SceneImage] = (), boxes_a: list[PlacementBox] = ()
) -> dict:
    """Mock VLM script covering every prompt the pipelines issue.

    Category answers are keyed on each Dataset A image both as-is and with
    its ground-truth box drawn in, so either prompting order gets them.
    """
    category_answers = {img.digest(): CATEGORY_ANSWERS[i] for i, img in enumerate(images_a)}
    for i, (img, box) in enumerate(zip(images_a, boxes_a)):
        category_answers[draw_box(img, box).digest()] = CATEGORY_ANSWERS[i]
    script = {
        "Look at the scene in the image. An object should be placed in the blue box. From the following list, *": {
            "by_digest": category_answers,
            "default": "Food, Drinks, FMCG",
        },
        "Look at the scene in the image. An object should be placed in the blue box. From the following list of*": {
            "by_image": COLLAPSED_ANSWERS,
        },
        "Look at the scene in the image. Would an object*": "7",
        "Look at this image.*": "6/10",
        "Analyze this image*": {
            "by_digest": {
                img.digest(): (PRODUCT_ANSWER if i % 3 else NO_PRODUCT_ANSWERS[i // 3])
                for i, img in enumerate(images_b)
            },
            "default": NO_PRODUCT_ANSWERS[0],
        },
    }
    for cat, objects in OBJECTS_BY_CATEGORY.items():
        key = f"The image shows a scene. Considering this scene, suggest a specific object for the category '{cat}' *"
        script[key] = {"by_image": objects}
    return script


def embedder_anchors() -> dict[str, list[int]]:
    """Anchor each sponsor's product text to its product colour."""
    return {SPONSORS[0].product_description: list(PRODUCT_COLOR), SPONSORS[1].product_description: [200, 30, 30]}


def detector_boxes() -> dict[str, list[float]]:
    """Per-category placement boxes for the mock detector."""
    return {
        "Food": [18, 30, 38, 48, 0.9],
        "Drinks": [26, 30, 44, 48, 0.85],
        "Electronics": [12, 26, 40, 46, 0.8],
        "FMCG": [30, 28, 50, 44, 0.75],
        "Cosmetics": [20, 30, 40, 46, 0.9],
        "Computers": [14, 24, 44, 46, 0.95],
    }


# (name, schema, record or raw line, expected error class name)
def invalid_records() -> list[tuple[str, str, Union[dict, str], str]]:
    good_a = {
        "schema_version": 1,
        "image_path": "../images_a/scene_00.png",
        "plausible_categories": ["Cosmetics"],
        "gt_box": {"x_min": 2, "y_min": 2, "x_max": 10, "y_max": 10},
        "locale": "Bathroom",
        "safety_flags": [],
    }
    no_sponsor_b = {
        "schema_version": 1,
        "image_path": "../images_b/scene_00.png",
        "variant": "no_sponsor_product",
        "product_category": "shampoo",
    }
    bad_mask_b = {
        "schema_version": 1,
        "image_path": "../images_b/scene_01.png",
        "variant": "product_no_logo",
        "product_category": "shampoo",
        "gt_box": {"x_min": 1, "y_min": 1, "x_max": 3, "y_max": 3},
        "gt_mask": {"width": 4, "height": 4, "rle": [5, 2, 2, 2, 5]},
        "sponsor_id": "lumina",
    }
    return [
        ("bad_json", "A", '{"schema_version": 1, "image_path": ', "MalformedRecord"),
        ("missing_key", "A", {k: v for k, v in good_a.items() if k != "locale"}, "MalformedRecord"),
        ("degenerate_box", "A", {**good_a, "gt_box": {"x_min": 10, "y_min": 2, "x_max": 10, "y_max": 9}},
         "MalformedRecord"),
        ("unknown_category", "A", {**good_a, "plausible_categories": ["Furniture"]}, "UnknownCategory"),
        ("missing_image", "A", {**good_a, "image_path": "../images_a/nope.png"}, "MissingImage"),
        ("no_sponsor_with_box", "B", {**no_sponsor_b, "gt_box": good_a["gt_box"]}, "MalformedRecord"),
        ("mask_size_mismatch", "B", bad_mask_b, "MalformedRecord"),
    ]


def build_invalid(root: Path) -> list[tuple[str, str, Path, str]]:
    out = root / "invalid"
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for name, schema, record, error in invalid_records():
        line = record if isinstance(record, str) else canonical_json(record)
        path = out / f"{name}.jsonl"
        path.write_text(line + "\n", encoding="utf-8")
        cases.append((name, schema, path, error))
    return cases


def mock_config(script_name: str = "vlm_collapse.json", seed: int = 7) -> dict:
    return {
        "seed": seed,
        "backends": {
            "vlm": {"type": "mock", "script": script_name, "name": "mock-vlm"},
            "detector": {"type": "mock", "boxes": detector_boxes()},
            "generator": {"type": "mock"},
            "embedder": {"type": "mock", "seed": 0, "anchors": embedder_anchors()},
        },
        "vlms": {
            "mock-vlm": {"type": "mock", "script": script_name},
            "mock-vlm-b": {"type": "mock", "script": script_name},
        },
        "thresholds": {"matte": 245, "feather": 2, "solver_eps": 1e-3, "solver_max_sweeps": 10000},
        "modes": {"blend": "alpha", "prompting": "two-stage", "box_source": "gt"},
        "evaluation": {"k": 3, "generation_size": [GENERATION_SIZE, GENERATION_SIZE]},
        "sponsor": {"logo_source": "prompt", "mask_source": "auto", "logo_size": [GENERATION_SIZE, GENERATION_SIZE]},
    }


ABLATION_GRID = [
    {"prompting": "single", "vlm": "mock-vlm"},
    {"prompting": "two-stage", "vlm": "mock-vlm"},
    {"prompting": "two-stage", "vlm": "mock-vlm-b"},
    {"prompting": "two-stage", "vlm": "missing-vlm"},
]


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    dataset_a: Path
    dataset_b: Path
    sponsors: Path
    vlm_script: Path
    config: Path
    ablation_grid: Path
    invalid: tuple[tuple[str, str, Path, str], ...]


def build_all(root: Union[str, Path]) -> FixturePaths:
    """Write the whole fixture corpus under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path_a, records_a, images_a = build_dataset_a(root)
    path_b, _, images_b = build_dataset_b(root)
    sponsors = root / "sponsors.jsonl"
    write_dataset(sponsors, SPONSORS)
    script = root / "vlm_collapse.json"
    _write_json(script, collapse_vlm_script(images_a, images_b, [r.gt_box for r in records_a]))
    config = root / "config.yaml"
    config.write_text(yaml.safe_dump(mock_config(script.name), sort_keys=True), encoding="utf-8")
    grid = root / "ablation_grid.yaml"
    grid.write_text(yaml.safe_dump(ABLATION_GRID, sort_keys=True), encoding="utf-8")
    invalid = tuple(build_invalid(root))
    return FixturePaths(root, path_a, path_b, sponsors, script, config, grid, invalid)
