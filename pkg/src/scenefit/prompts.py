"""Versioned prompt templates loaded from text files.

A template directory holds one ``<name>.v<N>.txt`` file per template; the
highest version of each name wins. Placeholders are literal ``{NAME}``
tokens replaced with :meth:`TemplateSet.render`. SHA-256 checksums of the
loaded files are reported in run provenance.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

from scenefit.errors import ConfigError

REQUIRED = (
    "category_prediction",
    "object_suggestion",
    "branded_object",
    "object_synthesis",
    "object_synthesis_negative",
    "single_stage",
    "placement_rating",
    "realism_rating",
)

_FILE_RE = re.compile(r"^(?P<name>[a-z_]+)\.v(?P<version>\d+)\.txt$")


@dataclass(frozen=True)
class TemplateSet:
    texts: Mapping[str, str]
    versions: Mapping[str, int]
    checksums: Mapping[str, str]

    def __getitem__(self, name: str) -> str:
        return self.texts[name]

    def render(self, name: str, **values: str) -> str:
        text = self.texts[name]
        for key, value in values.items():
            token = "{" + key + "}"
            if token not in text:
                raise KeyError(f"template {name!r} has no placeholder {token}")
            text = text.replace(token, value)
        return text

    def provenance(self) -> dict[str, str]:
        return {f"{n}.v{self.versions[n]}": self.checksums[n] for n in sorted(self.texts)}


def load_templates(directory: Union[str, Path, None] = None) -> TemplateSet:
    """Load templates from ``directory`` (default: the packaged set).

    Raises:
        ConfigError: the directory is missing or lacks a required template.
    """
    if directory is None:
        return _packaged()
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"template directory not found: {directory}")
    return _load_files({p.name: p.read_bytes() for p in directory.iterdir() if p.is_file()}, str(directory))


@lru_cache(maxsize=1)
def _packaged() -> TemplateSet:
    root = resources.files("scenefit") / "templates"
    files = {p.name: p.read_bytes() for p in root.iterdir() if p.name.endswith(".txt")}
    return _load_files(files, "packaged templates")


def _load_files(files: Mapping[str, bytes], where: str) -> TemplateSet:
    texts: dict[str, str] = {}
    versions: dict[str, int] = {}
    sums: dict[str, str] = {}
    for filename, raw in sorted(files.items()):
        m = _FILE_RE.match(filename)
        if not m:
            continue
        name, version = m["name"], int(m["version"])
        if name in versions and versions[name] >= version:
            continue
        texts[name] = raw.decode("utf-8").strip()
        versions[name] = version
        sums[name] = hashlib.sha256(raw).hexdigest()
    missing = [n for n in REQUIRED if n not in texts]
    if missing:
        raise ConfigError(f"{where}: missing template(s) {', '.join(missing)}")
    return TemplateSet(texts, versions, sums)
