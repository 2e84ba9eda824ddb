"""Category selection, object suggestion and branded-object identification.

Response cleanup rules (applied before any matching):

* category lists: a leading ``Categories:`` style label is dropped; the text
  is split on newlines, commas, semicolons and inline list numbering
  (``1) a 2) b``); each item loses list markers (``1.``, ``2)``, ``-``,
  ``*``), surrounding quotes/brackets/markdown emphasis, trailing
  punctuation and a leading ``and``/``or``; empty items are discarded.
  Items are then matched to the taxonomy case-insensitively, falling back
  to singular/plural normalization. Anything else fails loudly.
* object phrases: surrounding quotes and trailing punctuation are stripped,
  an ``Object:``/``Answer:`` label is removed and whitespace collapsed; more
  than one non-empty line is an error.
* branded findings: punctuation is removed (hyphens and apostrophes are
  deleted, the rest become spaces) before parsing.
"""

from __future__ import annotations

import logging
import re
import unicodedata
import warnings
from dataclasses import dataclass, field

from scenefit.backends.base import VlmBackend
from scenefit.errors import (
    EmptyResponse,
    EmptyTaxonomy,
    MultiLineResponse,
    NoListedObject,
    StageError,
    UnknownCategory,
    UnparseableResponse,
)
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import CategoryTaxonomy, PlacementBox, SceneImage, draw_box

log = logging.getLogger(__name__)

MAX_OBJECT_PHRASE = 80
UNRANKED = "<unranked>"

FINDABLE_OBJECTS = (
    "chips packet",
    "soda can",
    "shampoo bottle",
    "perfume can",
    "vacuum cleaner",
    "tshirt",
    "shoes",
    "coffee cup",
)


class TaxonomyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SuggestionResult:
    ranked_categories: tuple[str, ...]
    chosen_category: str
    object_phrase: str
    raw_responses: tuple[tuple[str, str], ...] = ()
    strategy: str = "two-stage"

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "ranked_categories": list(self.ranked_categories),
            "chosen_category": self.chosen_category,
            "object_phrase": self.object_phrase,
            "raw_responses": [list(pair) for pair in self.raw_responses],
        }


@dataclass(frozen=True)
class BrandedObjectFinding:
    object_name: str
    location_phrase: str
    brand: str

    def __post_init__(self) -> None:
        if self.object_name not in FINDABLE_OBJECTS:
            raise ValueError(f"{self.object_name!r} is not a findable object")
        for value in (self.object_name, self.location_phrase, self.brand):
            if any(unicodedata.category(ch).startswith("P") for ch in value):
                raise ValueError(f"punctuation in finding field {value!r}")

    def to_dict(self) -> dict:
        return {"object_name": self.object_name, "location_phrase": self.location_phrase, "brand": self.brand}


# -----------------------------------------------------------------------------
# Category stage
# -----------------------------------------------------------------------------


def build_category_prompt(taxonomy: CategoryTaxonomy, templates: TemplateSet | None = None) -> str:
    if len(taxonomy) == 0:
        raise EmptyTaxonomy("taxonomy has no categories")
    if len(taxonomy) < 3:
        warnings.warn(
            f"taxonomy has {len(taxonomy)} categories but the prompt asks for three",
            TaxonomyWarning,
            stacklevel=2,
        )
    templates = templates or load_templates()
    return templates.render("category_prediction", CATEGORY_LIST=", ".join(taxonomy))


_LABEL_RE = re.compile(
    r"^\s*(?:answer|response|ranking|(?:the\s+)?(?:three\s+)?(?:(?:best|most\s+likely)\s+)?"
    r"categor(?:y|ies)(?:\s+names?)?(?:\s+are)?)\s*[:\-]\s*",
    re.IGNORECASE,
)
_MARKER_RE = re.compile(r"^\s*(?:\(?\d+[.):\]]|[-*•])\s*")
_CONJ_RE = re.compile(r"^(?:and|or|&)\s+", re.IGNORECASE)
_SPLIT_RE = re.compile(r"[\n\r,;]|\s(?=\(?\d+[.)]\s)")
_WRAP_CHARS = "\"'`*_[](){}“”‘’ \t"
_TRAILING = ".!?:;"


def _clean_item(item: str) -> str:
    prev = None
    while item != prev:
        prev = item
        item = _LABEL_RE.sub("", item)
        item = _MARKER_RE.sub("", item)
        item = item.strip(_WRAP_CHARS).rstrip(_TRAILING)
        item = _CONJ_RE.sub("", item)
    return " ".join(item.split())


def clean_category_items(response: str) -> list[str]:
    items = (_clean_item(part) for part in _SPLIT_RE.split(response))
    return [i for i in items if i]


def clean_category_response(response: str) -> str:
    return ", ".join(clean_category_items(response))


def _singular(word: str) -> str:
    if word.endswith("ies") and len(word) > 3:
        return word[:-3] + "y"
    if word.endswith(("ses", "xes", "zes", "ches", "shes")):
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


def match_category(name: str, taxonomy: CategoryTaxonomy) -> str:
    """Map a cleaned item to taxonomy spelling; no edit-distance guessing."""
    folded = name.casefold()
    for cat in taxonomy:
        if cat.casefold() == folded:
            return cat
    hits = [cat for cat in taxonomy if _singular(cat.casefold()) == _singular(folded)]
    if len(hits) == 1:
        return hits[0]
    raise UnknownCategory(name)


def parse_category_response(response: str, taxonomy: CategoryTaxonomy) -> list[str]:
    """Parse a ranked three-category answer into taxonomy names.

    Raises:
        UnparseableResponse: not exactly three distinct items after cleanup.
        UnknownCategory: an item does not match the taxonomy.
    """
    items = clean_category_items(response)
    if len(items) != 3:
        raise UnparseableResponse(f"expected 3 categories, found {len(items)} in {response!r}")
    names = [match_category(i, taxonomy) for i in items]
    if len(set(names)) != 3:
        raise UnparseableResponse(f"repeated category in {response!r}")
    return names


# -----------------------------------------------------------------------------
# Object stage
# -----------------------------------------------------------------------------

_OBJECT_LABEL_RE = re.compile(r"^\s*(?:object(?:\s+name)?|answer|suggestion)\s*:\s*", re.IGNORECASE)


def clean_object_response(response: str) -> str:
    lines = [ln for ln in response.splitlines() if ln.strip()]
    if not lines:
        raise EmptyResponse("empty object suggestion")
    if len(lines) > 1:
        raise MultiLineResponse(f"object suggestion spans {len(lines)} lines: {response!r}")
    phrase = lines[0]
    prev = None
    while phrase != prev:
        prev = phrase
        phrase = _OBJECT_LABEL_RE.sub("", phrase)
        phrase = phrase.strip(_WRAP_CHARS).rstrip(_TRAILING + ",")
    phrase = " ".join(phrase.split())
    if not phrase:
        raise EmptyResponse(f"nothing left after cleanup of {response!r}")
    if len(phrase) > MAX_OBJECT_PHRASE:
        head = phrase[: MAX_OBJECT_PHRASE + 1]
        cut = head.rsplit(" ", 1)[0] if " " in head else head
        phrase = cut[:MAX_OBJECT_PHRASE].rstrip(_TRAILING + ",")
        log.warning("object phrase truncated to %r", phrase)
    return phrase


def build_object_prompt(category: str, templates: TemplateSet | None = None) -> str:
    return (templates or load_templates()).render("object_suggestion", category=category)


def suggest_object(
    image: SceneImage,
    category: str,
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
    taxonomy: CategoryTaxonomy | None = None,
) -> str:
    if taxonomy is not None and category not in taxonomy:
        raise UnknownCategory(category)
    return clean_object_response(vlm.answer(image, build_object_prompt(category, templates)))


def _prompt_image(image: SceneImage, box: PlacementBox | None) -> SceneImage:
    return draw_box(image, box) if box is not None else image


def two_stage_suggest(
    image: SceneImage,
    taxonomy: CategoryTaxonomy,
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
    box: PlacementBox | None = None,
    rank: int = 0,
) -> SuggestionResult:
    """Ask for three ranked categories, then for an object of the chosen one.

    ``box``, when given, is drawn in blue into the image shown to the VLM.
    ``rank`` picks which ranked category is expanded (0 = most likely).

    Raises:
        StageError: tagged ``stage=1`` or ``stage=2``; a stage-1 failure means
            no stage-2 call was made.
    """
    templates = templates or load_templates()
    shown = _prompt_image(image, box)
    try:
        prompt1 = build_category_prompt(taxonomy, templates)
        response1 = vlm.answer(shown, prompt1)
        ranked = parse_category_response(response1, taxonomy)
    except Exception as exc:
        raise StageError(1, exc) from exc
    chosen = ranked[rank]
    try:
        prompt2 = build_object_prompt(chosen, templates)
        response2 = vlm.answer(shown, prompt2)
        phrase = clean_object_response(response2)
    except Exception as exc:
        raise StageError(2, exc) from exc
    return SuggestionResult(
        ranked_categories=tuple(ranked),
        chosen_category=chosen,
        object_phrase=phrase,
        raw_responses=((prompt1, response1), (prompt2, response2)),
        strategy="two-stage",
    )


def parse_single_stage_response(response: str, taxonomy: CategoryTaxonomy) -> tuple[str, str]:
    """Split ``"Category: object"``; a bare object yields the UNRANKED sentinel."""
    try:
        line = clean_object_response(response)
    except (EmptyResponse, MultiLineResponse) as exc:
        raise UnparseableResponse(str(exc)) from exc
    if ":" not in response:
        return UNRANKED, line
    head, _, tail = response.strip().partition(":")
    category = _clean_item(head)
    if not category:
        raise UnparseableResponse(f"missing category in {response!r}")
    try:
        obj = clean_object_response(tail)
    except EmptyResponse as exc:
        raise UnparseableResponse(f"missing object in {response!r}") from exc
    return match_category(category, taxonomy), obj


def single_stage_suggest(
    image: SceneImage,
    taxonomy: CategoryTaxonomy,
    vlm: VlmBackend,
    templates: TemplateSet | None = None,
    box: PlacementBox | None = None,
) -> SuggestionResult:
    """One combined prompt for category and object (the baseline strategy)."""
    templates = templates or load_templates()
    try:
        if len(taxonomy) == 0:
            raise EmptyTaxonomy("taxonomy has no categories")
        prompt = templates.render("single_stage", CATEGORY_LIST=", ".join(taxonomy))
        response = vlm.answer(_prompt_image(image, box), prompt)
        category, phrase = parse_single_stage_response(response, taxonomy)
    except Exception as exc:
        raise StageError(1, exc) from exc
    return SuggestionResult(
        ranked_categories=(category, UNRANKED, UNRANKED),
        chosen_category=category,
        object_phrase=phrase,
        raw_responses=((prompt, response),),
        strategy="single",
    )


# -----------------------------------------------------------------------------
# Branded objects
# -----------------------------------------------------------------------------


def strip_punctuation(text: str) -> str:
    out = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            out.append("" if ch in "-'’" else " ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def parse_branded_response(response: str) -> BrandedObjectFinding:
    """Parse ``<object> <location words> <Brand>``.

    The longest listed object name found in the text is the object (ties go
    to the earliest occurrence). The trailing run of capitalized tokens after
    it is the brand, or the final token when none is capitalized; the words
    in between are the location.
    """
    tokens = strip_punctuation(response).split()
    folded = [t.casefold() for t in tokens]
    best = None  # (name length, -start, start, end, name)
    for name in FINDABLE_OBJECTS:
        parts = name.split()
        for start in range(len(tokens) - len(parts) + 1):
            if folded[start : start + len(parts)] == parts:
                key = (len(name), -start)
                if best is None or key > best[0]:
                    best = (key, start, start + len(parts), name)
    if best is None:
        raise NoListedObject(f"no listed object in {response!r}")
    _, _, end, name = best
    after = tokens[end:]
    if not after:
        raise UnparseableResponse(f"no brand after {name!r} in {response!r}")
    k = len(after)
    while k > 0 and after[k - 1][:1].isupper():
        k -= 1
    if k == len(after):
        k -= 1
    return BrandedObjectFinding(name, " ".join(after[:k]), " ".join(after[k:]))


def find_branded_object(
    image: SceneImage, vlm: VlmBackend, templates: TemplateSet | None = None
) -> BrandedObjectFinding:
    prompt = (templates or load_templates())["branded_object"]
    return parse_branded_response(vlm.answer(image, prompt))
