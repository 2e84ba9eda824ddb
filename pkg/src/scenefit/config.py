"""Run configuration (YAML) and its validation.

Relative paths inside a config are resolved against the config file's
directory. Validation checks every referenced path up front, so a bad
config fails before any model is called.

Example::

    seed: 7
    taxonomy: taxonomy.txt        # optional, default six categories
    templates: prompts/           # optional, default packaged templates
    backends:
      vlm: {type: mock, script: vlm_script.json}
      detector: {type: mock, default_box: [8, 8, 40, 40, 0.9]}
      generator: {type: mock}
      embedder: {type: mock, seed: 0}
    vlms:                         # extra VLMs addressable by ablation grids
      other-vlm: {type: mock, script: other.json}
    thresholds:
      matte: 245
      feather: 2
      solver_eps: 0.001
      solver_max_sweeps: 10000
      collision: {oob: 0, overlap: 0.25, occlusion: 0.10}
    modes: {blend: alpha, prompting: two-stage, box_source: gt}
    evaluation: {k: 3, generation_size: [256, 256]}
    sponsor: {logo_source: prompt, mask_source: auto, inset_fraction: 0.1, logo_scale: 0.6}
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from scenefit.backends.base import BackendSet, VlmBackend
from scenefit.backends.registry import KINDS, build_backend
from scenefit.compositing import BLEND_MODES
from scenefit.errors import ConfigError
from scenefit.evaluation.runner import STRATEGIES, EvalSettings
from scenefit.placement import CollisionThresholds
from scenefit.prompts import TemplateSet, load_templates
from scenefit.scene_model import CategoryTaxonomy
from scenefit.sponsor import SponsorSettings

TOP_LEVEL_KEYS = {
    "seed", "taxonomy", "templates", "backends", "vlms", "thresholds", "modes", "evaluation", "sponsor",
    "output_dir",
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    base_dir: Path
    backends: Mapping[str, Mapping[str, Any]]
    vlms: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    taxonomy_path: Optional[Path] = None
    templates_dir: Optional[Path] = None
    thresholds: Mapping[str, Any] = field(default_factory=dict)
    blend_mode: str = "alpha"
    prompting: str = "two-stage"
    box_source: str = "gt"
    evaluation: Mapping[str, Any] = field(default_factory=dict)
    sponsor: Mapping[str, Any] = field(default_factory=dict)
    output_dir: Optional[Path] = None
    checksum: str = ""

    # -- construction --------------------------------------------------------

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = path.read_bytes()
        try:
            data = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        return cls.from_mapping(data, path.parent, hashlib.sha256(raw).hexdigest())

    @classmethod
    def from_mapping(cls, data: Any, base_dir: Union[str, Path] = ".", checksum: str = "") -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        seed = data.get("seed")
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("an explicit integer 'seed' is required")
        base_dir = Path(base_dir)
        backends = data.get("backends")
        if not isinstance(backends, Mapping) or "vlm" not in backends:
            raise ConfigError("'backends' must be a mapping with at least a 'vlm' entry")
        for kind, section in backends.items():
            if kind not in KINDS:
                raise ConfigError(f"unknown backend kind {kind!r}")
            if not isinstance(section, Mapping):
                raise ConfigError(f"backend {kind!r} must be a mapping")
        vlms = data.get("vlms") or {}
        if not isinstance(vlms, Mapping) or not all(isinstance(v, Mapping) for v in vlms.values()):
            raise ConfigError("'vlms' must map names to backend sections")
        modes = _mapping(data, "modes")
        config = cls(
            seed=seed,
            base_dir=base_dir,
            backends={k: dict(v) for k, v in backends.items()},
            vlms={str(k): dict(v) for k, v in vlms.items()},
            taxonomy_path=_path(base_dir, data.get("taxonomy"), "taxonomy", file=True),
            templates_dir=_path(base_dir, data.get("templates"), "templates", file=False),
            thresholds=_mapping(data, "thresholds"),
            blend_mode=str(modes.get("blend", "alpha")),
            prompting=str(modes.get("prompting", "two-stage")),
            box_source=str(modes.get("box_source", "gt")),
            evaluation=_mapping(data, "evaluation"),
            sponsor=_mapping(data, "sponsor"),
            output_dir=base_dir / data["output_dir"] if data.get("output_dir") else None,
            checksum=checksum,
        )
        config.validate()
        return config

    def validate(self) -> None:
        if self.blend_mode not in BLEND_MODES:
            raise ConfigError(f"blend mode must be one of {BLEND_MODES}, got {self.blend_mode!r}")
        if self.prompting not in STRATEGIES:
            raise ConfigError(f"prompting must be one of {STRATEGIES}, got {self.prompting!r}")
        if self.box_source not in ("gt", "predicted"):
            raise ConfigError(f"box_source must be 'gt' or 'predicted', got {self.box_source!r}")
        for key in ("human_realism_file", "human_logo_file"):
            if self.evaluation.get(key):
                _path(self.base_dir, self.evaluation[key], key, file=True)
        for section in [*self.backends.values(), *self.vlms.values()]:
            script = section.get("script")
            if isinstance(script, str):
                _path(self.base_dir, script, "mock script", file=True)
        # Build settings objects now so malformed values fail at load time.
        try:
            self.eval_settings()
            self.sponsor_settings()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid settings: {exc}") from None
        self.load_taxonomy()
        self.load_templates()

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """Copy with CLI overrides applied (``None`` values are ignored)."""
        changes = {k: v for k, v in changes.items() if v is not None}
        updated = replace(self, **changes)
        updated.validate()
        return updated

    # -- derived objects -----------------------------------------------------

    def load_taxonomy(self) -> CategoryTaxonomy:
        if self.taxonomy_path is None:
            return CategoryTaxonomy.default()
        try:
            return CategoryTaxonomy.load(self.taxonomy_path)
        except ValueError as exc:
            raise ConfigError(f"invalid taxonomy {self.taxonomy_path}: {exc}") from None

    def load_templates(self) -> TemplateSet:
        return load_templates(self.templates_dir)

    def build_backends(self) -> BackendSet:
        built = {kind: build_backend(kind, section, self.base_dir) for kind, section in self.backends.items()}
        return BackendSet(**built)

    def build_vlms(self) -> dict[str, VlmBackend]:
        """Named VLMs for ablation; the main VLM is always available by its name."""
        vlms = {name: build_backend("vlm", section, self.base_dir) for name, section in self.vlms.items()}
        for name, vlm in vlms.items():
            vlm.name = name
        return vlms

    def collision_thresholds(self) -> CollisionThresholds:
        return CollisionThresholds(**dict(self.thresholds.get("collision") or {}))

    def eval_settings(self, jobs: int = 1) -> EvalSettings:
        t, e = self.thresholds, self.evaluation
        size = e.get("generation_size", (1024, 1024))
        return EvalSettings(
            seed=self.seed,
            k=int(e.get("k", 3)),
            prompting=self.prompting,
            blend_mode=self.blend_mode,
            box_source=self.box_source,
            jobs=int(jobs),
            generation_size=(int(size[0]), int(size[1])),
            matte_threshold=float(t.get("matte", 245)),
            feather=int(t.get("feather", 2)),
            solver_eps=float(t.get("solver_eps", 1e-3)),
            solver_max_sweeps=int(t.get("solver_max_sweeps", 10000)),
            collision=self.collision_thresholds(),
            human_realism_file=_opt_str(self.base_dir, e.get("human_realism_file")),
            human_logo_file=_opt_str(self.base_dir, e.get("human_logo_file")),
        )

    def sponsor_settings(self) -> SponsorSettings:
        t, s = self.thresholds, self.sponsor
        size = s.get("logo_size", self.evaluation.get("generation_size", (1024, 1024)))
        settings = SponsorSettings(
            seed=self.seed,
            logo_size=(int(size[0]), int(size[1])),
            logo_source=str(s.get("logo_source", "prompt")),
            mask_source=str(s.get("mask_source", "auto")),
            inset_fraction=float(s.get("inset_fraction", 0.10)),
            logo_scale=float(s.get("logo_scale", 0.60)),
            opacity=float(s.get("opacity", 1.0)),
            matte_threshold=float(t.get("matte", 245)),
            feather=int(t.get("feather", 2)),
            solver_eps=float(t.get("solver_eps", 1e-3)),
            solver_max_sweeps=int(t.get("solver_max_sweeps", 10000)),
        )
        if settings.logo_source not in ("prompt", "asset"):
            raise ValueError(f"sponsor.logo_source must be 'prompt' or 'asset', got {settings.logo_source!r}")
        if settings.mask_source not in ("auto", "box"):
            raise ValueError(f"sponsor.mask_source must be 'auto' or 'box', got {settings.mask_source!r}")
        return settings

    def provenance(self) -> dict[str, Any]:
        return {
            "config_checksum": self.checksum,
            "seed": self.seed,
            "modes": {"blend": self.blend_mode, "prompting": self.prompting, "box_source": self.box_source},
            "templates": self.load_templates().provenance(),
            "taxonomy": list(self.load_taxonomy()),
        }


def _mapping(data: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"'{key}' must be a mapping")
    return dict(value)


def _path(base: Path, value: Any, what: str, file: bool) -> Optional[Path]:
    if value is None:
        return None
    path = base / str(value)
    ok = path.is_file() if file else path.is_dir()
    if not ok:
        raise ConfigError(f"{what} {'file' if file else 'directory'} not found: {path}")
    return path


def _opt_str(base: Path, value: Any) -> Optional[str]:
    return str(base / str(value)) if value else None
