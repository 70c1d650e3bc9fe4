"""Run configuration.

Search order: an explicit ``--config`` path, then ``./layoutforge.config``,
then built-in defaults. The file is JSON; any subset of keys may be given.
Credentials never live here, only the *name* of the environment variable
holding the API key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

DEFAULT_CONFIG_NAME = "layoutforge.config"

MODEL_ROLES = ("bev_generator", "layout_lifter", "spatial_evaluator", "quant_evaluator", "descriptor")


@dataclass(frozen=True)
class RoleConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    temperature: float = 0.0
    max_tokens: int = 4096


def _default_roles() -> dict[str, RoleConfig]:
    roles = {r: RoleConfig() for r in MODEL_ROLES}
    # layout sampling draws distinct seeds at temperature 1
    roles["bev_generator"] = RoleConfig(temperature=1.0)
    return roles


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 120.0


@dataclass(frozen=True)
class Config:
    roles: dict[str, RoleConfig] = field(default_factory=_default_roles)
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key_env: str = "LAYOUTFORGE_API_KEY"
    max_in_flight: int = 8
    max_iters: int = 3
    collision_eps: float = 1.0
    oob_tolerance: float = 0.5
    pair_threshold: float = 0.20
    raster_scale: int = 4
    seed: int = 0

    def role(self, name: str) -> RoleConfig:
        return self.roles[name]


def _build(cls, data: dict[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict[str, Any]) -> Config:
    data = dict(data)
    roles = _default_roles()
    for name, raw in data.pop("roles", {}).items():
        if name not in MODEL_ROLES:
            raise ValueError(f"unknown model role {name!r}")
        roles[name] = replace(roles[name], **raw)
    retry = _build(RetryPolicy, data.pop("retry", {}))
    return replace(_build(Config, data), roles=roles, retry=retry)


def load_config(path: str | Path | None = None) -> Config:
    if path is None:
        candidate = Path(DEFAULT_CONFIG_NAME)
        if not candidate.exists():
            return Config()
        path = candidate
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
