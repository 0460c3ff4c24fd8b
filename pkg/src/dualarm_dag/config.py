"""JSON configuration with ``planner`` and ``provider`` sections.

Keys may be nested (``{"planner": {"d_reachable_m": 0.8}}``) or dotted
(``{"planner.d_reachable_m": 0.8}``).
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .planner import PlannerConfig

_KNOWN = {
    "planner": {"d_reachable_m", "d_across_m", "allow_idle_arm", "tie_break"},
    "provider": {"url", "model", "auth_env", "timeout_s"},
}


class ConfigError(ValueError):
    code = "CONFIG_ERROR"


@dataclass(frozen=True)
class ProviderConfig:
    url: str | None = None
    model: str | None = None
    auth_env: str | None = None
    timeout_s: float = 60.0


@dataclass(frozen=True)
class AppConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)


def _sections(data: Mapping) -> dict[str, dict]:
    out: dict[str, dict] = {name: {} for name in _KNOWN}
    for key, value in data.items():
        if key in _KNOWN:
            if not isinstance(value, Mapping):
                raise ConfigError(f"section {key!r} must be an object")
            out[key].update(value)
            continue
        section, _, leaf = key.partition(".")
        if section not in _KNOWN or not leaf:
            raise ConfigError(f"unknown configuration key {key!r}")
        out[section][leaf] = value
    for section, values in out.items():
        unknown = sorted(set(values) - _KNOWN[section])
        if unknown:
            raise ConfigError(f"unknown {section} key(s): {', '.join(unknown)}")
    return out


def config_from_mapping(data: Mapping) -> AppConfig:
    sections = _sections(data)
    try:
        planner = PlannerConfig.from_mapping(sections["planner"])
        prov = sections["provider"]
        provider = ProviderConfig(
            url=prov.get("url"),
            model=prov.get("model"),
            auth_env=prov.get("auth_env"),
            timeout_s=float(prov.get("timeout_s", 60.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return AppConfig(planner, provider)


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a JSON object")
    return config_from_mapping(data)
