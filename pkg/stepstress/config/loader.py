"""Configuration loading utilities."""

from __future__ import annotations

import json
from copy import deepcopy
from pathlib import Path
from typing import Any

from pydantic import ValidationError
from pydantic.alias_generators import to_camel

from stepstress.config.presets import preset_data
from stepstress.config.schema import ExperimentConfig


class ConfigError(ValueError):
    """An experiment config could not be read or failed validation."""

    def __init__(self, message: str, details: list[dict[str, Any]] | None = None) -> None:
        super().__init__(message)
        self.details = details or []


def _merge(base: dict, override: dict) -> dict:
    """Recursively overlay ``override`` on ``base``; lists and scalars replace."""
    out = deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = deepcopy(value)
    return out


def _camel_keys(data: dict) -> dict:
    out = {}
    for key, value in data.items():
        name = "nUnits" if key == "N" else to_camel(key)
        out[name] = _camel_keys(value) if isinstance(value, dict) else value
    return out


def resolve_preset(data: dict) -> dict:
    """Expand a ``preset`` key into the preset's fields overlaid with the remaining keys."""
    name = data.get("preset")
    if not name:
        return data
    return _merge(preset_data(name), _camel_keys(data))


def _format_errors(err: ValidationError) -> tuple[str, list[dict[str, Any]]]:
    details = [
        {"field": ".".join(str(p) for p in e["loc"]) or "<root>", "message": e["msg"]}
        for e in err.errors()
    ]
    summary = "; ".join(f"{d['field']}: {d['message']}" for d in details)
    return summary, details


def validate_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(resolve_preset(data))
    except ValidationError as e:
        summary, details = _format_errors(e)
        raise ConfigError(f"{source}: {summary}", details) from e


def load_config(config_path: Path) -> ExperimentConfig:
    """
    Load and validate an experiment config.

    Args:
        config_path: JSON file, optionally naming a preset to start from.

    Returns:
        Validated configuration.

    Raises:
        ConfigError: unreadable file, malformed JSON (with line/column) or invalid fields.
    """
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}",
            [{"field": "<json>", "line": e.lineno, "column": e.colno, "message": e.msg}],
        ) from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    try:
        return validate_config(data, str(path))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    return config.model_dump(mode="json", by_alias=True)


def save_config(config: ExperimentConfig, config_path: Path) -> None:
    """
    Save configuration to file.

    Args:
        config: Configuration to save.
        config_path: Destination; parent directories are created.
    """
    path = Path(config_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(config), f, indent=2, ensure_ascii=False)
        f.write("\n")
