"""Experiment configuration: one YAML document resolving backends and the
template/lexicon/cache/run directories. Credentials stay in environment
variables named by the config, never in the file itself."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .gateway import (BackendConfig, ChatBackend, DecodingParams, Limits,
                      MockRule, ResponseCache, ScriptedTransport)


@dataclass
class Settings:
    backends: dict = field(default_factory=dict)
    template_dir: str | None = None
    lexicon_dir: str | None = None
    cache_dir: str | None = "cache"
    runs_dir: str = "runs"
    reports_dir: str = "reports"
    base_dir: Path = field(default_factory=Path)

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path


def load_settings(path: str | Path | None) -> Settings:
    if path is None:
        return Settings()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    settings = Settings(base_dir=path.parent.resolve())
    settings.backends = doc.get("backends", {}) or {}
    for key in ("template_dir", "lexicon_dir", "cache_dir", "runs_dir", "reports_dir"):
        if key in doc and doc[key] is not None:
            setattr(settings, key, doc[key])
    return settings


def build_backend(settings: Settings, name: str) -> ChatBackend:
    """Instantiate a backend named in the config.

    type: http (default) builds an OpenAI-compatible HTTP backend;
    type: mock builds a scripted backend usable fully offline.
    """
    spec = settings.backends.get(name)
    if spec is None:
        raise ConfigError(f"backend {name!r} is not defined in the config")
    if not isinstance(spec, dict):
        raise ConfigError(f"backend {name!r}: definition must be a mapping")

    cache_dir = settings.resolve(settings.cache_dir)
    cache = ResponseCache(cache_dir)
    limits_spec = spec.get("limits", {}) or {}
    limits = Limits(
        max_in_flight=int(limits_spec.get("max_in_flight", 4)),
        retry_budget=int(limits_spec.get("retry_budget", 3)),
        requests_per_minute=limits_spec.get("requests_per_minute"),
    )
    decoding = DecodingParams(
        temperature=float(spec.get("temperature", 0.0)),
        max_output_tokens=int(spec.get("max_output_tokens", 1024)),
        response_format_hint=spec.get("response_format_hint"),
    )

    if spec.get("type", "http") == "mock":
        rules = []
        for rule in spec.get("rules", []) or []:
            response = rule.get("response")
            if isinstance(response, dict):
                response = json.dumps(response)
            rules.append(MockRule(pattern=rule["pattern"], response=response))
        default = spec.get("default_response")
        if isinstance(default, dict):
            default = json.dumps(default)
        config = BackendConfig(name=name, model=spec.get("model", "mock-model"),
                               decoding=decoding, limits=limits)
        return ChatBackend(config, cache=cache,
                           transport=ScriptedTransport(rules, default),
                           sleep=lambda _t: None, clock=lambda: 0.0)

    endpoint = spec.get("endpoint")
    model = spec.get("model")
    if not endpoint or not model:
        raise ConfigError(f"backend {name!r}: endpoint and model are required")
    config = BackendConfig(name=name, endpoint=endpoint, model=model,
                           auth_env=spec.get("auth_env"),
                           decoding=decoding, limits=limits)
    return ChatBackend(config, cache=cache)
