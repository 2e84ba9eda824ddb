"""Shared domain types, dataset record schemas, loaders and validators.

Datasets are UTF-8 JSON Lines files, one record per line, each carrying
``schema_version: 1``. Image paths inside a record are relative to the
directory holding the dataset file.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np
from PIL import Image

from scenefit.errors import MalformedRecord, MissingImage, UnknownCategory

SCHEMA_VERSION = 1

# Locale / safety-flag statistics of the full Dataset B release. Documentation
# only; synthetic fixtures cannot reproduce them.
PAPER_DATASET_STATS = {"locales": 29, "alcohol": 42, "children": 2}


# -----------------------------------------------------------------------------
# Geometry and rasters
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class PlacementBox:
    """Axis-aligned box in absolute pixel coordinates.

    Boxes are half-open: a pixel column ``x`` belongs to the box when
    ``x_min <= x`` and ``x + 1 <= x_max`` for integer coordinates.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        for c in coords:
            if isinstance(c, bool) or not isinstance(c, (int, float, np.integer, np.floating)):
                raise ValueError(f"box coordinate must be a number, got {c!r}")
            if not math.isfinite(c):
                raise ValueError(f"box coordinate must be finite, got {c!r}")
        for name, c in zip(("x_min", "y_min", "x_max", "y_max"), coords):
            object.__setattr__(self, name, float(c))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate or inverted box {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def scaled(self, factor: float) -> "PlacementBox":
        return PlacementBox(*(c * factor for c in self.as_tuple()))

    def to_dict(self) -> dict[str, float]:
        return {"x_min": self.x_min, "y_min": self.y_min, "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlacementBox":
        return cls(data["x_min"], data["y_min"], data["x_max"], data["y_max"])


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major boolean raster, optionally tagged (e.g. ``important``)."""

    width: int
    height: int
    bits: np.ndarray
    tags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.size != self.width * self.height:
            raise ValueError(
                f"mask has {bits.size} bits, expected {self.width}x{self.height}={self.width * self.height}"
            )
        object.__setattr__(self, "bits", _readonly(bits.reshape(self.height, self.width)))
        object.__setattr__(self, "tags", frozenset(self.tags))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.tags == other.tags
            and bool(np.array_equal(self.bits, other.bits))
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def bounding_rect(self) -> tuple[int, int, int, int] | None:
        """Half-open ``(x0, y0, x1, y1)`` of the set bits, or None when empty."""
        ys, xs = np.nonzero(self.bits)
        if xs.size == 0:
            return None
        return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1

    def to_rle(self) -> list[int]:
        return encode_rle(self.bits)

    @classmethod
    def from_rle(cls, width: int, height: int, runs: Sequence[int], tags: Iterable[str] = ()) -> "BinaryMask":
        return cls(width, height, decode_rle(runs, width * height), frozenset(tags))

    @classmethod
    def from_box(cls, box: PlacementBox, width: int, height: int, inset: float = 0.0) -> "BinaryMask":
        """Rasterize a box: pixel centres inside ``[min + inset, max - inset)``."""
        xs = np.arange(width) + 0.5
        ys = np.arange(height) + 0.5
        col = (xs >= box.x_min + inset) & (xs < box.x_max - inset)
        row = (ys >= box.y_min + inset) & (ys < box.y_max - inset)
        return cls(width, height, np.outer(row, col))


def encode_rle(bits: np.ndarray) -> list[int]:
    """Alternating run lengths over the flattened bits, starting with 0-bits."""
    flat = np.asarray(bits, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(runs: Sequence[int], size: int) -> np.ndarray:
    total = 0
    for r in runs:
        if isinstance(r, bool) or not isinstance(r, int) or r < 0:
            raise ValueError(f"run lengths must be non-negative integers, got {r!r}")
        total += r
    if total != size:
        raise ValueError(f"run lengths sum to {total}, expected {size}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs)


@dataclass(frozen=True, eq=False)
class SceneImage:
    """Decoded RGB8 raster, shape ``(height, width, 3)``."""

    width: int
    height: int
    pixels: np.ndarray
    object_masks: tuple[BinaryMask, ...] = ()

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        pixels = np.asarray(self.pixels)
        if pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {pixels.dtype}")
        if pixels.size != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer has {pixels.size} values, expected {self.width * self.height * 3}"
            )
        object.__setattr__(self, "pixels", _readonly(pixels.reshape(self.height, self.width, 3)))
        masks = tuple(self.object_masks)
        for m in masks:
            if (m.width, m.height) != (self.width, self.height):
                raise ValueError(
                    f"mask {m.width}x{m.height} does not match image {self.width}x{self.height}"
                )
        object.__setattr__(self, "object_masks", masks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SceneImage):
            return NotImplemented
        return (
            bool(np.array_equal(self.pixels, other.pixels))
            and self.object_masks == other.object_masks
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_array(cls, array: np.ndarray, object_masks: Iterable[BinaryMask] = ()) -> "SceneImage":
        array = np.asarray(array)
        if array.ndim != 3 or array.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got shape {array.shape}")
        return cls(array.shape[1], array.shape[0], array, tuple(object_masks))

    @classmethod
    def load(cls, path: Union[str, Path], object_masks: Iterable[BinaryMask] = ()) -> "SceneImage":
        with Image.open(path) as im:
            array = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return cls.from_array(array, object_masks)

    def save(self, path: Union[str, Path]) -> None:
        Image.fromarray(np.ascontiguousarray(self.pixels), mode="RGB").save(path, format="PNG")

    def with_pixels(self, array: np.ndarray) -> "SceneImage":
        return SceneImage(self.width, self.height, array, self.object_masks)

    def with_masks(self, masks: Iterable[BinaryMask]) -> "SceneImage":
        return SceneImage(self.width, self.height, self.pixels, tuple(masks))

    def crop(self, box: PlacementBox) -> "SceneImage":
        """Crop to the box, clamped to the image; raises ValueError when empty."""
        x0, y0, x1, y1 = clamp_box_pixels(box, self.width, self.height)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"box {box.as_tuple()} does not overlap the image")
        return SceneImage.from_array(self.pixels[y0:y1, x0:x1])

    def digest(self) -> str:
        return hashlib.sha256(self.pixels.tobytes()).hexdigest()


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def clamp_box_pixels(box: PlacementBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer pixel bounds of the box (rounded half-up) clamped to the image."""
    x0 = min(max(round_half_up(box.x_min), 0), width)
    y0 = min(max(round_half_up(box.y_min), 0), height)
    x1 = min(max(round_half_up(box.x_max), 0), width)
    y1 = min(max(round_half_up(box.y_max), 0), height)
    return x0, y0, x1, y1


# -----------------------------------------------------------------------------
# Taxonomy, records, sponsors
# -----------------------------------------------------------------------------

DEFAULT_CATEGORIES = ("Food", "Drinks", "Electronics", "FMCG", "Cosmetics", "Computers")


@dataclass(frozen=True)
class CategoryTaxonomy:
    categories: tuple[str, ...]

    def __post_init__(self) -> None:
        cats = tuple(self.categories)
        for c in cats:
            if not isinstance(c, str) or not c.strip():
                raise ValueError(f"category names must be non-empty strings, got {c!r}")
        dupes = [c for c, n in Counter(cats).items() if n > 1]
        if dupes:
            raise ValueError(f"duplicate categories: {dupes}")
        object.__setattr__(self, "categories", cats)

    def __contains__(self, name: object) -> bool:
        return name in self.categories

    def __iter__(self):
        return iter(self.categories)

    def __len__(self) -> int:
        return len(self.categories)

    @classmethod
    def default(cls) -> "CategoryTaxonomy":
        return cls(DEFAULT_CATEGORIES)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CategoryTaxonomy":
        """One category per line; blank lines and ``#`` comments ignored."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(s.strip() for s in lines if s.strip() and not s.lstrip().startswith("#")))


class Variant(str, Enum):
    NO_SPONSOR_PRODUCT = "no_sponsor_product"
    PRODUCT_NO_LOGO = "product_no_logo"
    PRODUCT_WRONG_LOGO = "product_wrong_logo"


@dataclass(frozen=True)
class DatasetRecordA:
    image_path: str
    plausible_categories: tuple[str, ...]
    gt_box: PlacementBox
    locale: str
    safety_flags: frozenset[str] = frozenset()
    object_masks: tuple[BinaryMask, ...] = ()
    root: Path | None = field(default=None, compare=False, repr=False)

    @property
    def image_file(self) -> Path:
        return (self.root or Path(".")) / self.image_path

    @property
    def canonical_category(self) -> str:
        return self.plausible_categories[0]

    def load_image(self) -> SceneImage:
        return SceneImage.load(self.image_file, self.object_masks)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "image_path": self.image_path,
            "plausible_categories": list(self.plausible_categories),
            "gt_box": self.gt_box.to_dict(),
            "locale": self.locale,
            "safety_flags": sorted(self.safety_flags),
        }
        if self.object_masks:
            data["object_masks"] = [_mask_to_dict(m, with_tags=True) for m in self.object_masks]
        return data


@dataclass(frozen=True)
class DatasetRecordB:
    image_path: str
    variant: Variant
    product_category: str
    gt_box: PlacementBox | None = None
    gt_mask: BinaryMask | None = None
    sponsor_id: str | None = None
    root: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        present = [self.gt_box is not None, self.gt_mask is not None, self.sponsor_id is not None]
        if self.variant is Variant.NO_SPONSOR_PRODUCT and any(present):
            raise ValueError("no_sponsor_product records must not carry gt_box, gt_mask or sponsor_id")
        if self.variant is not Variant.NO_SPONSOR_PRODUCT and not all(present):
            raise ValueError(f"{self.variant.value} records require gt_box, gt_mask and sponsor_id")

    @property
    def image_file(self) -> Path:
        return (self.root or Path(".")) / self.image_path

    def load_image(self) -> SceneImage:
        return SceneImage.load(self.image_file)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "image_path": self.image_path,
            "variant": self.variant.value,
            "product_category": self.product_category,
        }
        if self.gt_box is not None:
            data["gt_box"] = self.gt_box.to_dict()
        if self.gt_mask is not None:
            data["gt_mask"] = _mask_to_dict(self.gt_mask)
        if self.sponsor_id is not None:
            data["sponsor_id"] = self.sponsor_id
        return data


DatasetRecord = Union[DatasetRecordA, DatasetRecordB]


@dataclass(frozen=True)
class SponsorSpec:
    """A sponsor and how to recognise / brand its product.

    ``product_keywords`` lists the findable object names (e.g. ``shampoo
    bottle``) that map a branded-object finding to this sponsor.
    """

    sponsor_id: str
    product_description: str
    logo_prompt: str = ""
    logo_asset: str | None = None
    product_keywords: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.sponsor_id:
            raise ValueError("sponsor_id must be non-empty")
        if not self.product_description.strip():
            raise ValueError("product_description must be non-empty")
        if not self.logo_prompt.strip() and not self.logo_asset:
            raise ValueError("either logo_prompt or logo_asset is required")
        object.__setattr__(self, "product_keywords", tuple(self.product_keywords))

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "sponsor_id": self.sponsor_id,
            "product_description": self.product_description,
            "logo_prompt": self.logo_prompt,
            "product_keywords": list(self.product_keywords),
        }
        if self.logo_asset is not None:
            data["logo_asset"] = self.logo_asset
        return data


# -----------------------------------------------------------------------------
# Serialization
# -----------------------------------------------------------------------------


def canonical_json(data: Mapping[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def serialize_record(record: DatasetRecord | SponsorSpec) -> str:
    return canonical_json(record.to_dict())


def write_dataset(path: Union[str, Path], records: Iterable[DatasetRecord | SponsorSpec]) -> None:
    lines = [serialize_record(r) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _mask_to_dict(mask: BinaryMask, with_tags: bool = False) -> dict[str, Any]:
    data: dict[str, Any] = {"width": mask.width, "height": mask.height, "rle": mask.to_rle()}
    if with_tags:
        data["tags"] = sorted(mask.tags)
    return data


_A_REQUIRED = {"schema_version", "image_path", "plausible_categories", "gt_box", "locale", "safety_flags"}
_A_OPTIONAL = {"object_masks"}
_B_REQUIRED = {"schema_version", "image_path", "variant", "product_category"}
_B_OPTIONAL = {"gt_box", "gt_mask", "sponsor_id"}
_SPONSOR_REQUIRED = {"schema_version", "sponsor_id", "product_description"}
_SPONSOR_OPTIONAL = {"logo_prompt", "logo_asset", "product_keywords"}


class _Invalid(Exception):
    """Internal: field-level validation failure, converted to MalformedRecord."""


def _check_keys(data: Mapping[str, Any], required: set[str], optional: set[str]) -> None:
    missing = required - data.keys()
    if missing:
        raise _Invalid(f"missing field(s): {', '.join(sorted(missing))}")
    extra = data.keys() - required - optional
    if extra:
        raise _Invalid(f"unknown field(s): {', '.join(sorted(extra))}")
    if data["schema_version"] != SCHEMA_VERSION or isinstance(data["schema_version"], bool):
        raise _Invalid(f"unsupported schema_version {data['schema_version']!r}")


def _string(data: Mapping[str, Any], key: str, allow_empty: bool = False) -> str:
    value = data.get(key)
    if not isinstance(value, str) or (not allow_empty and not value.strip()):
        raise _Invalid(f"{key} must be a non-empty string")
    return value


def _string_list(data: Mapping[str, Any], key: str) -> list[str]:
    value = data.get(key)
    if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
        raise _Invalid(f"{key} must be a list of non-empty strings")
    return value


def _box(value: Any, key: str) -> PlacementBox:
    if not isinstance(value, dict) or set(value) != {"x_min", "y_min", "x_max", "y_max"}:
        raise _Invalid(f"{key} must be an object with x_min, y_min, x_max, y_max")
    try:
        return PlacementBox.from_dict(value)
    except ValueError as exc:
        raise _Invalid(f"{key}: {exc}") from None


def _mask(value: Any, key: str, with_tags: bool = False) -> BinaryMask:
    allowed = {"width", "height", "rle"} | ({"tags"} if with_tags else set())
    if not isinstance(value, dict) or not {"width", "height", "rle"} <= value.keys() or not value.keys() <= allowed:
        raise _Invalid(f"{key} must be an object with width, height, rle")
    w, h, runs = value["width"], value["height"], value["rle"]
    if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in (w, h)):
        raise _Invalid(f"{key}: width/height must be positive integers")
    if not isinstance(runs, list):
        raise _Invalid(f"{key}: rle must be a list")
    tags = value.get("tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise _Invalid(f"{key}: tags must be a list of strings")
    try:
        return BinaryMask.from_rle(w, h, runs, tags)
    except ValueError as exc:
        raise _Invalid(f"{key}: {exc}") from None


def parse_record_a(data: Mapping[str, Any], taxonomy: CategoryTaxonomy, line: int = 0) -> DatasetRecordA:
    try:
        _check_keys(data, _A_REQUIRED, _A_OPTIONAL)
        cats = _string_list(data, "plausible_categories")
        if not cats:
            raise _Invalid("plausible_categories must be non-empty")
        if len(set(cats)) != len(cats):
            raise _Invalid("plausible_categories contains duplicates")
        for c in cats:
            if c not in taxonomy:
                raise UnknownCategory(c, line)
        flags = _string_list(data, "safety_flags")
        masks_raw = data.get("object_masks", [])
        if not isinstance(masks_raw, list):
            raise _Invalid("object_masks must be a list")
        masks = tuple(_mask(m, "object_masks", with_tags=True) for m in masks_raw)
        if len({(m.width, m.height) for m in masks}) > 1:
            raise _Invalid("object_masks have inconsistent dimensions")
        return DatasetRecordA(
            image_path=_string(data, "image_path"),
            plausible_categories=tuple(cats),
            gt_box=_box(data["gt_box"], "gt_box"),
            locale=_string(data, "locale"),
            safety_flags=frozenset(flags),
            object_masks=masks,
        )
    except _Invalid as exc:
        raise MalformedRecord(line, str(exc)) from None


def parse_record_b(data: Mapping[str, Any], line: int = 0) -> DatasetRecordB:
    try:
        _check_keys(data, _B_REQUIRED, _B_OPTIONAL)
        variant_raw = _string(data, "variant")
        try:
            variant = Variant(variant_raw)
        except ValueError:
            raise _Invalid(f"unknown variant {variant_raw!r}") from None
        box = data.get("gt_box")
        mask = data.get("gt_mask")
        sponsor = data.get("sponsor_id")
        if sponsor is not None and (not isinstance(sponsor, str) or not sponsor):
            raise _Invalid("sponsor_id must be a non-empty string")
        try:
            return DatasetRecordB(
                image_path=_string(data, "image_path"),
                variant=variant,
                product_category=_string(data, "product_category"),
                gt_box=None if box is None else _box(box, "gt_box"),
                gt_mask=None if mask is None else _mask(mask, "gt_mask"),
                sponsor_id=sponsor,
            )
        except ValueError as exc:
            raise _Invalid(str(exc)) from None
    except _Invalid as exc:
        raise MalformedRecord(line, str(exc)) from None


def parse_sponsor(data: Mapping[str, Any], line: int = 0) -> SponsorSpec:
    try:
        _check_keys(data, _SPONSOR_REQUIRED, _SPONSOR_OPTIONAL)
        keywords = data.get("product_keywords", [])
        if not isinstance(keywords, list) or not all(isinstance(k, str) and k for k in keywords):
            raise _Invalid("product_keywords must be a list of non-empty strings")
        logo_prompt = data.get("logo_prompt", "")
        logo_asset = data.get("logo_asset")
        if not isinstance(logo_prompt, str) or (logo_asset is not None and not isinstance(logo_asset, str)):
            raise _Invalid("logo_prompt/logo_asset must be strings")
        try:
            return SponsorSpec(
                sponsor_id=_string(data, "sponsor_id"),
                product_description=_string(data, "product_description"),
                logo_prompt=logo_prompt,
                logo_asset=logo_asset,
                product_keywords=tuple(keywords),
            )
        except ValueError as exc:
            raise _Invalid(str(exc)) from None
    except _Invalid as exc:
        raise MalformedRecord(line, str(exc)) from None


def _iter_json_lines(path: Path):
    with path.open(encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_num, f"invalid JSON: {exc.msg}") from None
            if not isinstance(data, dict):
                raise MalformedRecord(line_num, "record must be a JSON object")
            yield line_num, data


def load_dataset(
    path: Union[str, Path],
    schema: str,
    taxonomy: CategoryTaxonomy | None = None,
    check_images: bool = True,
) -> list[DatasetRecord]:
    """Load and validate a Dataset A or B file.

    Args:
        path: JSON Lines dataset file.
        schema: ``"A"`` (object insertion) or ``"B"`` (sponsor products).
        taxonomy: label space for Dataset A categories; defaults to
            :meth:`CategoryTaxonomy.default`.
        check_images: verify that every referenced image exists.

    Raises:
        MalformedRecord: a line fails parsing or a type invariant.
        UnknownCategory: a Dataset A category is outside the taxonomy.
        MissingImage: a referenced image file does not exist.
    """
    path = Path(path)
    schema = schema.upper()
    if schema not in ("A", "B"):
        raise ValueError(f"schema must be 'A' or 'B', got {schema!r}")
    taxonomy = taxonomy or CategoryTaxonomy.default()
    root = path.parent
    records: list[DatasetRecord] = []
    for line_num, data in _iter_json_lines(path):
        if schema == "A":
            record: DatasetRecord = parse_record_a(data, taxonomy, line_num)
        else:
            record = parse_record_b(data, line_num)
        object.__setattr__(record, "root", root)
        if check_images and not record.image_file.is_file():
            raise MissingImage(record.image_file, line_num)
        if isinstance(record, DatasetRecordB) and record.gt_mask is not None and check_images:
            with Image.open(record.image_file) as im:
                if im.size != (record.gt_mask.width, record.gt_mask.height):
                    raise MalformedRecord(line_num, "gt_mask dimensions differ from the image")
        records.append(record)
    return records


def load_sponsor_registry(path: Union[str, Path]) -> list[SponsorSpec]:
    """Load a sponsor registry (JSON Lines of sponsor records).

    ``logo_asset`` paths are resolved relative to the registry file.
    """
    path = Path(path)
    sponsors = []
    seen: set[str] = set()
    for line_num, data in _iter_json_lines(path):
        spec = parse_sponsor(data, line_num)
        if spec.sponsor_id in seen:
            raise MalformedRecord(line_num, f"duplicate sponsor_id {spec.sponsor_id!r}")
        seen.add(spec.sponsor_id)
        if spec.logo_asset is not None:
            spec = SponsorSpec(
                spec.sponsor_id,
                spec.product_description,
                spec.logo_prompt,
                str(path.parent / spec.logo_asset),
                spec.product_keywords,
            )
        sponsors.append(spec)
    if not sponsors:
        raise MalformedRecord(0, "sponsor registry is empty")
    return sponsors


# -----------------------------------------------------------------------------
# Summary
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryReport:
    total: int
    schema_counts: dict[str, int]
    locales: dict[str, int]
    safety_flags: dict[str, int]
    variants: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "schema_counts": dict(self.schema_counts),
            "locales": dict(self.locales),
            "safety_flags": dict(self.safety_flags),
            "variants": dict(self.variants),
        }


def dataset_summary(records: Iterable[DatasetRecord]) -> SummaryReport:
    """Locale histogram, safety-flag counts and variant counts, keys sorted."""
    locales: Counter[str] = Counter()
    flags: Counter[str] = Counter()
    variants: Counter[str] = Counter({v.value: 0 for v in Variant})
    schema_counts = {"A": 0, "B": 0}
    for r in records:
        if isinstance(r, DatasetRecordA):
            schema_counts["A"] += 1
            locales[r.locale] += 1
            flags.update(r.safety_flags)
        else:
            schema_counts["B"] += 1
            variants[r.variant.value] += 1
    return SummaryReport(
        total=schema_counts["A"] + schema_counts["B"],
        schema_counts=schema_counts,
        locales=dict(sorted(locales.items())),
        safety_flags=dict(sorted(flags.items())),
        variants=dict(sorted(variants.items())),
    )


BOX_COLOR = (0, 0, 255)
BOX_STROKE = 3


def draw_box(
    image: SceneImage, box: PlacementBox, color: Sequence[int] = BOX_COLOR, stroke: int = BOX_STROKE
) -> SceneImage:
    """Return a copy with the box outline drawn inward, clipped to the image."""
    x0, y0 = round_half_up(box.x_min), round_half_up(box.y_min)
    x1, y1 = round_half_up(box.x_max), round_half_up(box.y_max)
    xs = np.arange(image.width)
    ys = np.arange(image.height)
    in_x = (xs >= x0) & (xs < x1)
    in_y = (ys >= y0) & (ys < y1)
    inside = np.outer(in_y, in_x)
    edge_x = (xs < x0 + stroke) | (xs >= x1 - stroke)
    edge_y = (ys < y0 + stroke) | (ys >= y1 - stroke)
    ring = inside & (edge_y[:, None] | edge_x[None, :])
    out = image.pixels.copy()
    out[ring] = color
    return image.with_pixels(out)
