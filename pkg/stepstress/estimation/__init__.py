"""MDPDE estimation: divergence, fitting and asymptotic inference."""

from stepstress.estimation.asymptotics import (
    AsymptoticCovariance,
    asymptotic_covariance,
    sandwich_matrices,
    wald_ci,
)
from stepstress.estimation.divergence import (
    EmpiricalProbs,
    TuningParam,
    beta_score,
    dpd_loss,
    empirical_probs,
)
from stepstress.estimation.optimizer import FitResult, StartSummary, fit_grid, fit_mdpde

__all__ = [
    "AsymptoticCovariance",
    "EmpiricalProbs",
    "FitResult",
    "StartSummary",
    "TuningParam",
    "asymptotic_covariance",
    "beta_score",
    "dpd_loss",
    "empirical_probs",
    "fit_grid",
    "fit_mdpde",
    "sandwich_matrices",
    "wald_ci",
]
