"""Sandwich covariance of the MDPDE and Wald intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from stepstress.core.errors import NumericalError
from stepstress.core.model import cell_prob_jacobian, cell_probabilities
from stepstress.core.types import ModelParams, StepStressDesign
from stepstress.estimation.divergence import TuningParam, as_tuning

MAX_CONDITION = 1e12


@dataclass(frozen=True, slots=True)
class AsymptoticCovariance:
    """Asymptotic covariance Sigma of sqrt(N) (theta_hat - theta) and the sample size it refers to."""

    sigma: np.ndarray
    n_units: int
    names: tuple[str, ...] = ()

    @property
    def finite_sample(self) -> np.ndarray:
        return self.sigma / self.n_units

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.finite_sample), 0.0, None))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "nUnits": self.n_units,
            "sigma": self.sigma.tolist(),
            "stdErrors": self.std_errors.tolist(),
        }


def sandwich_matrices(
    theta: ModelParams, d: StepStressDesign, beta: TuningParam | float
) -> tuple[np.ndarray, np.ndarray]:
    """Return (J, K) with J = W^T D^(b-1) W and K = W^T (D^(2b-1) - pi^b pi^b^T) W."""
    b = as_tuning(beta).beta
    pi = cell_probabilities(theta, d).values
    W = cell_prob_jacobian(theta, d)
    J = W.T @ (pi[:, None] ** (b - 1) * W)
    v = W.T @ pi**b
    K = W.T @ (pi[:, None] ** (2 * b - 1) * W) - np.outer(v, v)
    return J, K


def _check_conditioning(J: np.ndarray, names: tuple[str, ...]) -> None:
    diag = np.diag(J)
    if np.any(~np.isfinite(J)) or np.any(diag <= 0):
        raise NumericalError("J matrix is not positive definite", {"diagonal": diag.tolist()})
    scale = 1.0 / np.sqrt(diag)
    normalized = J * np.outer(scale, scale)
    eigvals, eigvecs = np.linalg.eigh(normalized)
    condition = math.inf if eigvals[0] <= 0 else float(eigvals[-1] / eigvals[0])
    if condition > MAX_CONDITION:
        direction = eigvecs[:, 0]
        worst = int(np.argmax(np.abs(direction)))
        raise NumericalError(
            f"J is ill-conditioned (condition number {condition:.3g}); "
            f"weakest direction loads on {names[worst]}",
            {
                "condition_number": condition,
                "direction": dict(zip(names, direction.tolist())),
                "deficient_parameter": names[worst],
            },
        )


def asymptotic_covariance(
    theta: ModelParams, d: StepStressDesign, beta: TuningParam | float, n_units: int
) -> AsymptoticCovariance:
    """Sigma = J^-1 K J^-1, evaluated at ``theta`` with the same tuning parameter.

    At beta = 0 this reduces to the inverse Fisher information of one unit.
    """
    if n_units < 1:
        raise ValueError(f"n_units must be >= 1, got {n_units}")
    J, K = sandwich_matrices(theta, d, beta)
    _check_conditioning(J, theta.names)
    left = np.linalg.solve(J, K)
    sigma = np.linalg.solve(J, left.T).T
    sigma = 0.5 * (sigma + sigma.T)
    return AsymptoticCovariance(sigma, int(n_units), theta.names)


def normal_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    return float(norm.ppf(1 - (1 - level) / 2))


def wald_ci(
    estimate: float,
    std_error: float,
    level: float = 0.95,
    lower_bound: float | None = None,
    upper_bound: float | None = None,
) -> tuple[float, float]:
    """Symmetric normal interval, truncated to [lower_bound, upper_bound] when given."""
    if std_error < 0:
        raise ValueError(f"std_error must be >= 0, got {std_error}")
    z = normal_quantile(level)
    lo, hi = estimate - z * std_error, estimate + z * std_error
    if lower_bound is not None:
        lo, hi = max(lo, lower_bound), max(hi, lower_bound)
    if upper_bound is not None:
        lo, hi = min(lo, upper_bound), min(hi, upper_bound)
    return float(lo), float(hi)
