"""Service configuration: one JSON file plus environment overrides.

Precedence: environment variables (SAFEQA_*) > config file > built-in
defaults. The same loader feeds the CLI and the HTTP service so both share
one configuration story.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Optional

from .errors import ConfigError

ENV_PREFIX = "SAFEQA_"


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    store_dir: str = ""            # corpus event-log directory ("" = in-memory)
    moderation_dir: str = ""       # moderation event-log directory
    rules_path: str = ""           # rail rules JSON ("" = packaged defaults)
    pii_rules_path: str = ""       # PII rule config ("" = packaged defaults)
    embedding_provider: str = "mock"
    embedding_url: str = ""
    embedding_dimension: int = 256
    llm_provider: str = "mock"
    llm_url: str = ""
    llm_model: str = "mock-chat"
    asr_provider: str = "mock"
    asr_url: str = ""
    asr_fixtures_path: str = ""    # uri -> text registry for the mock
    mt_provider: str = "mock"
    mt_url: str = ""
    tts_provider: str = "mock"
    tts_url: str = ""
    judge_provider: str = "mock"
    tau: float = 0.5
    theta_topic: float = 0.05
    grounding_min: float = 0.3
    rerank_weight: float = 0.3
    route_mode: str = "direct"     # direct | translate
    source_lang: str = "hi"
    pipeline_lang: str = "hi"
    output_lang: str = "hi"
    user_token: str = "user-token"
    moderator_token: str = "moderator-token"
    search_k: int = 10
    icl_examples: int = 3
    context_passages: int = 3
    permits: int = 8
    temperature: float = 0.2
    max_tokens: int = 512

    def validate(self) -> "ServiceConfig":
        for name in ("tau", "theta_topic", "grounding_min", "rerank_weight"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.route_mode not in ("direct", "translate"):
            raise ConfigError(f"route_mode must be direct|translate, "
                              f"got {self.route_mode!r}")
        if self.route_mode == "direct" and self.pipeline_lang != self.source_lang:
            raise ConfigError("direct route requires pipeline_lang == source_lang")
        for name in ("rules_path", "pii_rules_path", "asr_fixtures_path"):
            path = getattr(self, name)
            if path and not Path(path).exists():
                raise ConfigError(f"{name} does not exist: {path}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(value: str, target_type: type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def load_config(path: Optional[str | Path] = None,
                env: Optional[Mapping[str, str]] = None) -> ServiceConfig:
    """Defaults, overlaid by the JSON file, overlaid by SAFEQA_* variables."""
    env = os.environ if env is None else env
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(ServiceConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    by_name = {f.name: f for f in fields(ServiceConfig)}
    for name, spec in by_name.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            try:
                values[name] = _coerce(env[env_key], type(spec.default))
            except ValueError as exc:
                raise ConfigError(f"bad value for {env_key}: {exc}") from exc
    try:
        config = ServiceConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def write_config_value(path: str | Path, key: str, value) -> None:
    """Persist one key into the JSON config file, creating it if needed."""
    p = Path(path)
    data = {}
    if p.exists():
        data = json.loads(p.read_text(encoding="utf-8"))
    data[key] = value
    p.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
