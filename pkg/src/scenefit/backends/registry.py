"""Construct backends by name from run-config sections."""

from __future__ import annotations

import importlib
import json
from pathlib import Path
from typing import Any, Mapping

from scenefit.backends.base import Backend
from scenefit.backends.http import OpenAICompatibleVlm
from scenefit.backends.mock import MockDetector, MockEmbedder, MockGenerator, MockVlm
from scenefit.errors import ConfigError

KINDS = ("vlm", "detector", "generator", "embedder")


def _load_script(value: Any, base_dir: Path) -> dict:
    if isinstance(value, Mapping):
        return dict(value)
    if isinstance(value, str):
        path = base_dir / value
        if not path.is_file():
            raise ConfigError(f"mock script not found: {path}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"mock script {path} is not valid JSON: {exc}") from None
    raise ConfigError("mock vlm needs a 'script' mapping or path")


def _import_target(target: str):
    module_name, _, attr = target.partition(":")
    if not attr:
        raise ConfigError(f"python backend target must look like 'module:Class', got {target!r}")
    try:
        return getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import backend {target!r}: {exc}") from None


def build_backend(kind: str, section: Mapping[str, Any], base_dir: Path | str = ".") -> Backend:
    """Build one backend from its config section (``{"type": ..., ...}``).

    Supported types: ``mock`` for every kind, ``openai-compatible`` for VLMs,
    and ``python`` (``target: "module:Class"`` plus ``kwargs``) for anything
    else, e.g. a local diffusers or CLIP wrapper.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown backend kind {kind!r}")
    base_dir = Path(base_dir)
    opts = dict(section)
    btype = opts.pop("type", None)
    name = opts.pop("name", None)
    try:
        if btype == "python":
            cls = _import_target(opts.pop("target", ""))
            backend = cls(**opts.get("kwargs", {}))
        elif btype == "mock" and kind == "vlm":
            backend = MockVlm(_load_script(opts.get("script"), base_dir))
        elif btype == "mock" and kind == "detector":
            backend = MockDetector(
                boxes=opts.get("boxes"),
                default_box=opts.get("default_box"),
                min_saturation=int(opts.get("min_saturation", 60)),
                min_area=int(opts.get("min_area", 16)),
            )
        elif btype == "mock" and kind == "generator":
            backend = MockGenerator()
        elif btype == "mock" and kind == "embedder":
            backend = MockEmbedder(
                dim=int(opts.get("dim", 64)), seed=int(opts.get("seed", 0)), anchors=opts.get("anchors")
            )
        elif btype == "openai-compatible" and kind == "vlm":
            backend = OpenAICompatibleVlm(
                endpoint=opts["endpoint"],
                model=opts["model"],
                api_key_env=opts.get("api_key_env"),
                timeout=float(opts.get("timeout", 60.0)),
                retries=int(opts.get("retries", 2)),
                temperature=float(opts.get("temperature", 0.0)),
                max_tokens=int(opts.get("max_tokens", 64)),
                max_concurrency=opts.get("max_concurrency"),
            )
        else:
            raise ConfigError(f"unsupported {kind} backend type {btype!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} backend config: {exc}") from None
    if name:
        backend.name = name
    return backend
