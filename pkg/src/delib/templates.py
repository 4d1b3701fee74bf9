"""Prompt template loading and placeholder substitution.

Templates are plain-text files with {{name}} placeholders. The bundled set
lives in the package's templates/ directory; a directory override replaces
files by name.
"""
from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigError

_BUNDLED = Path(__file__).parent / "templates"
_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class TemplateSet:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        if self.directory is not None and not self.directory.is_dir():
            raise ConfigError(f"template directory not found: {self.directory}")
        self._cache: dict[str, str] = {}

    @property
    def version(self) -> str:
        return self.load("VERSION").strip()

    def _path(self, name: str) -> Path:
        filename = f"{name}.txt"
        if self.directory is not None:
            override = self.directory / filename
            if override.is_file():
                return override
        bundled = _BUNDLED / filename
        if bundled.is_file():
            return bundled
        raise ConfigError(f"unknown template: {name}")

    def load(self, name: str) -> str:
        if name not in self._cache:
            self._cache[name] = self._path(name).read_text(encoding="utf-8")
        return self._cache[name]

    def render(self, name: str, **values) -> str:
        text = self.load(name).rstrip("\n")

        def sub(match: re.Match) -> str:
            key = match.group(1)
            if key == "definitions":
                return self.load("definitions").rstrip("\n")
            if key not in values:
                raise ConfigError(f"template {name!r}: missing value for {{{{{key}}}}}")
            return str(values[key])

        rendered = _PLACEHOLDER.sub(sub, text)
        leftover = _PLACEHOLDER.search(rendered)
        if leftover:
            raise ConfigError(f"template {name!r}: unresolved placeholder {leftover.group(0)}")
        return rendered


DEFAULT_TEMPLATES = TemplateSet()
