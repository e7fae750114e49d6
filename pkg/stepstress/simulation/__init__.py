"""Synthetic step-stress data, adjusted residuals and Monte Carlo studies."""

from stepstress.simulation.generator import (
    ContaminationSpec,
    adjusted_residuals,
    conditional_probabilities,
    expected_counts,
    generate_counts,
)
from stepstress.simulation.study import (
    CellSummary,
    MonteCarloReport,
    SimulationConfig,
    characteristic_targets,
    rmse_study,
)

__all__ = [
    "CellSummary",
    "ContaminationSpec",
    "MonteCarloReport",
    "SimulationConfig",
    "adjusted_residuals",
    "characteristic_targets",
    "conditional_probabilities",
    "expected_counts",
    "generate_counts",
    "rmse_study",
]
