"""Configuration module for stepstress."""

from stepstress.config.loader import ConfigError, load_config, save_config, validate_config
from stepstress.config.presets import get_preset, preset_names
from stepstress.config.schema import ExperimentConfig, RuntimeSettings, SolverOptions

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RuntimeSettings",
    "SolverOptions",
    "get_preset",
    "load_config",
    "preset_names",
    "save_config",
    "validate_config",
]
