"""Declarative service configuration.

Validation happens at load time and refuses to start on the first invalid
field, naming it (e.g. "ephemeral_defaults.n: must be >= 1").
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .access import IdentifierPolicy
from .errors import ConfigError
from .minimize import (
    DEFAULT_DETECTORS,
    DEFAULT_KEYWORDS,
    DEFAULT_NEGATIVE_WORDS,
    DEFAULT_POSITIVE_WORDS,
    MinimizerConfig,
    StubAnswerer,
)
from .scope import PRESETS, ScopePolicy


@dataclass
class ServiceConfig:
    persistence_dir: str = "./reportflow-data"
    key_store: str | None = None  # default: <persistence_dir>/keys.json
    appeal_window_days: int = 7
    identifier_policy: IdentifierPolicy = IdentifierPolicy.DELAYED_UNTIL_DECISION
    scope_presets: dict[str, ScopePolicy] = field(default_factory=lambda: dict(PRESETS))
    detectors: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_DETECTORS))
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    negative_words: tuple[str, ...] = DEFAULT_NEGATIVE_WORDS
    positive_words: tuple[str, ...] = DEFAULT_POSITIVE_WORDS
    questions: tuple[str, ...] = tuple(sorted(StubAnswerer.DEFAULT_QUESTIONS))
    ephemeral_default_mode: str = "seconds"
    ephemeral_default_n: int = 30
    flood_threshold_per_minute: int = 10
    assign_count: int = 1
    harness_mode: bool = False

    @property
    def key_store_path(self) -> Path:
        if self.key_store:
            return Path(self.key_store)
        return Path(self.persistence_dir) / "keys.json"

    @property
    def wal_path(self) -> Path:
        return Path(self.persistence_dir) / "wal.ndjson"

    def minimizer(self) -> MinimizerConfig:
        return MinimizerConfig(
            keywords=tuple(self.keywords),
            negative_words=tuple(self.negative_words),
            positive_words=tuple(self.positive_words),
            detectors=dict(self.detectors),
            answerer=StubAnswerer(self.questions),
        )


def _require(cond: bool, field_name: str, problem: str) -> None:
    if not cond:
        raise ConfigError(field_name, problem)


def config_from_dict(raw: dict[str, Any]) -> ServiceConfig:
    cfg = ServiceConfig()
    known = {
        "persistence_dir",
        "key_store",
        "appeal_window_days",
        "identifier_policy",
        "scope_presets",
        "detectors",
        "keywords",
        "negative_words",
        "positive_words",
        "questions",
        "ephemeral_defaults",
        "flood_threshold_per_minute",
        "assign_count",
        "harness_mode",
    }
    for key in raw:
        _require(key in known, key, "unknown config field")

    if "persistence_dir" in raw:
        _require(isinstance(raw["persistence_dir"], str) and raw["persistence_dir"] != "",
                 "persistence_dir", "must be a non-empty path")
        cfg.persistence_dir = raw["persistence_dir"]
    if "key_store" in raw:
        cfg.key_store = raw["key_store"]
    if "appeal_window_days" in raw:
        v = raw["appeal_window_days"]
        _require(isinstance(v, int) and v >= 1, "appeal_window_days", "must be an integer >= 1")
        cfg.appeal_window_days = v
    if "identifier_policy" in raw:
        try:
            cfg.identifier_policy = IdentifierPolicy(raw["identifier_policy"])
        except ValueError:
            raise ConfigError("identifier_policy", f"unknown policy {raw['identifier_policy']!r}")
    if "scope_presets" in raw:
        _require(isinstance(raw["scope_presets"], dict), "scope_presets", "must be an object")
        for name, policy_json in raw["scope_presets"].items():
            if name in PRESETS:
                raise ConfigError(f"scope_presets.{name}", "shipped presets cannot be overridden")
            try:
                cfg.scope_presets[name] = ScopePolicy.from_json(policy_json)
            except Exception as exc:
                raise ConfigError(f"scope_presets.{name}", str(exc))
    if "detectors" in raw:
        _require(isinstance(raw["detectors"], dict), "detectors", "must be an object")
        for name, pattern in raw["detectors"].items():
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ConfigError(f"detectors.{name}", f"invalid pattern: {exc}")
        cfg.detectors = dict(raw["detectors"])
    for list_field in ("keywords", "negative_words", "positive_words", "questions"):
        if list_field in raw:
            v = raw[list_field]
            _require(
                isinstance(v, list) and all(isinstance(x, str) for x in v),
                list_field,
                "must be a list of strings",
            )
            setattr(cfg, list_field, tuple(v))
    if "ephemeral_defaults" in raw:
        eph = raw["ephemeral_defaults"]
        _require(isinstance(eph, dict), "ephemeral_defaults", "must be an object")
        mode = eph.get("mode", "seconds")
        _require(mode in ("seconds", "messages"), "ephemeral_defaults.mode",
                 "must be 'seconds' or 'messages'")
        n = eph.get("n", 30)
        _require(isinstance(n, int) and n >= 1, "ephemeral_defaults.n", "must be >= 1")
        cfg.ephemeral_default_mode = mode
        cfg.ephemeral_default_n = n
    if "flood_threshold_per_minute" in raw:
        v = raw["flood_threshold_per_minute"]
        _require(isinstance(v, int) and v >= 1, "flood_threshold_per_minute",
                 "must be an integer >= 1")
        cfg.flood_threshold_per_minute = v
    if "assign_count" in raw:
        v = raw["assign_count"]
        _require(isinstance(v, int) and v >= 1, "assign_count", "must be an integer >= 1")
        cfg.assign_count = v
    if "harness_mode" in raw:
        _require(isinstance(raw["harness_mode"], bool), "harness_mode", "must be a boolean")
        cfg.harness_mode = raw["harness_mode"]
    return cfg


def load_config(path: str | Path) -> ServiceConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError(str(path), "config root must be an object")
    return config_from_dict(raw)
