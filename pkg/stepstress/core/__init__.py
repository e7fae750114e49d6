"""Core step-stress model: domain types and model evaluation."""

from stepstress.core.errors import NumericalError
from stepstress.core.model import (
    acceleration_factor,
    baseline_hazard,
    cell_prob_jacobian,
    cell_probabilities,
    constant_stress_cdf,
    constant_stress_cumulative_hazard,
    constant_stress_reliability,
    cumulative_hazard,
    cumulative_hazard_gradient,
    invert_cumulative_baseline,
    log_likelihood,
    reliability_gradient,
    shifting_time,
    shifting_time_gradient,
    solve_shifting_time,
    step_reliability,
    unchecked_cell_probabilities,
)
from stepstress.core.types import (
    BaselineHazard,
    BaselineKind,
    CellProbabilities,
    GroupedCounts,
    ModelParams,
    StepStressDesign,
    parameter_names,
)

__all__ = [
    "BaselineHazard",
    "BaselineKind",
    "CellProbabilities",
    "GroupedCounts",
    "ModelParams",
    "NumericalError",
    "StepStressDesign",
    "acceleration_factor",
    "baseline_hazard",
    "cell_prob_jacobian",
    "cell_probabilities",
    "constant_stress_cdf",
    "constant_stress_cumulative_hazard",
    "constant_stress_reliability",
    "cumulative_hazard",
    "cumulative_hazard_gradient",
    "invert_cumulative_baseline",
    "log_likelihood",
    "parameter_names",
    "reliability_gradient",
    "shifting_time",
    "shifting_time_gradient",
    "solve_shifting_time",
    "step_reliability",
    "unchecked_cell_probabilities",
]
