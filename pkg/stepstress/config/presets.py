"""Built-in experiment scenarios.

``linear-sim`` and ``quadratic-sim`` are the Monte Carlo scenarios for the
two baseline kinds. ``mos-capacitor`` is the temperature-stepped MOS capacitor
experiment: stresses are Arrhenius-transformed, ``x = -1 / (temperature in K)``,
so 145 C and 250 C become -2.3914e-3 and -1.9114e-3.
"""

from __future__ import annotations

import math
from typing import Any, Callable

from stepstress.config.schema import DEFAULT_BETAS, ExperimentConfig

_EPSILON_GRID = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def _linear_sim() -> dict[str, Any]:
    return {
        "preset": "linear-sim",
        "baseline": "linear",
        "design": {
            "x1": 0.5,
            "x2": 2.5,
            "tau": 14.0,
            "inspectionTimes": [float(t) for t in range(2, 23, 2)],
            "nUnits": 200,
        },
        "theta": {"gamma": [math.exp(-4.0), math.exp(-5.3)], "a1": 0.5},
        "noc": {"x0": 0.3, "t0": 5.0, "p": 0.5, "level": 0.95},
        "betas": list(DEFAULT_BETAS),
        "contamination": {"cell": 10, "epsilons": list(_EPSILON_GRID)},
        "simulation": {"replicates": 1000, "seed": 20240101},
    }


def _quadratic_sim() -> dict[str, Any]:
    return {
        "preset": "quadratic-sim",
        "baseline": "quadratic",
        "design": {
            "x1": 0.5,
            "x2": 2.5,
            "tau": 8.0,
            "inspectionTimes": [float(t) for t in range(1, 13)],
            "nUnits": 200,
        },
        "theta": {"gamma": [math.exp(-4.0), 0.0, math.exp(-6.0)], "a1": 0.5},
        "noc": {"x0": 0.3, "t0": 5.0, "p": 0.5, "level": 0.95},
        "betas": list(DEFAULT_BETAS),
        # Penultimate cell; the cell index is configurable.
        "contamination": {"cell": 11, "epsilons": list(_EPSILON_GRID)},
        "simulation": {"replicates": 1000, "seed": 20240102},
    }


def _mos_capacitor() -> dict[str, Any]:
    return {
        "preset": "mos-capacitor",
        "baseline": "linear",
        "design": {
            "x1": -2.3914e-3,
            "x2": -1.9114e-3,
            # Not recorded for this experiment. 170 minimizes the variance of the
            # estimated use-condition hazard over the inspection times; override with --tau.
            "tau": 170.0,
            "inspectionTimes": [40.0, 60.0, 90.0, 110.0, 130.0, 150.0, 170.0, 183.0, 190.0,
                                210.0, 220.0, 250.0],
            "nUnits": 200,
        },
        "theta": {"gamma": [1e-4, 0.5], "a1": 3800.0},
        "noc": {"x0": -1.0 / 323.15, "t0": 60.0, "p": 0.5, "level": 0.95},
        "betas": list(DEFAULT_BETAS),
        "contamination": {"cell": 12, "epsilons": [0.0]},
        "simulation": {"replicates": 1000, "seed": 20240103},
    }


PRESETS: dict[str, tuple[str, Callable[[], dict[str, Any]]]] = {
    "linear-sim": ("Linear baseline Monte Carlo scenario, contamination at cell 10", _linear_sim),
    "quadratic-sim": ("Quadratic baseline Monte Carlo scenario, contamination at cell 11", _quadratic_sim),
    "mos-capacitor": ("MOS capacitor temperature step test (Arrhenius stresses)", _mos_capacitor),
}


def preset_names() -> list[str]:
    return list(PRESETS)


def preset_data(name: str) -> dict[str, Any]:
    """Raw camelCase mapping for a preset; callers may merge overrides into it."""
    try:
        _, factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return factory()


def get_preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.model_validate(preset_data(name))
