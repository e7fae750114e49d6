"""Density power divergence between empirical and model cell probabilities, and its score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from stepstress.core.model import cell_prob_jacobian, cell_probabilities
from stepstress.core.types import (
    PROB_ATOL,
    CellProbabilities,
    GroupedCounts,
    ModelParams,
    StepStressDesign,
)


@dataclass(frozen=True, slots=True)
class TuningParam:
    """DPD tuning parameter; beta = 0 is the Kullback-Leibler (maximum likelihood) limit."""

    beta: float

    def __post_init__(self) -> None:
        beta = float(self.beta)
        if not math.isfinite(beta) or beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        object.__setattr__(self, "beta", beta)

    def __float__(self) -> float:
        return self.beta


@dataclass(frozen=True, slots=True)
class EmpiricalProbs:
    """Relative frequencies n_j / N of the observed cells."""

    p_hat: np.ndarray
    n_total: int

    def __post_init__(self) -> None:
        values = np.array(self.p_hat, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ValueError(f"empirical probabilities must be a vector of length >= 2, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise ValueError("empirical probabilities must lie in [0, 1]")
        total = float(values.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"empirical probabilities must sum to 1, got {total!r}")
        if isinstance(self.n_total, bool) or int(self.n_total) != self.n_total or self.n_total < 1:
            raise ValueError(f"n_total must be a positive integer, got {self.n_total}")
        values.setflags(write=False)
        object.__setattr__(self, "p_hat", values)
        object.__setattr__(self, "n_total", int(self.n_total))

    def __len__(self) -> int:
        return len(self.p_hat)


def as_tuning(beta: TuningParam | float) -> TuningParam:
    return beta if isinstance(beta, TuningParam) else TuningParam(beta)


def empirical_probs(counts: GroupedCounts) -> EmpiricalProbs:
    total = counts.n_total
    if total == 0:
        raise ValueError("cannot form empirical probabilities from zero observations")
    return EmpiricalProbs(counts.array / total, total)


def _values(x) -> np.ndarray:
    if isinstance(x, EmpiricalProbs):
        return x.p_hat
    if isinstance(x, CellProbabilities):
        return x.values
    return np.asarray(x, dtype=float)


def dpd_loss(
    p_hat: EmpiricalProbs | np.ndarray,
    pi: CellProbabilities | np.ndarray,
    beta: TuningParam | float,
) -> float:
    """DPD between the empirical and the model distribution.

    For beta > 0 this is ``sum(pi^(1+b) - (1 + 1/b) pi^b p + p^(1+b) / b)``; for
    beta = 0 it is the Kullback-Leibler divergence ``sum(p log(p / pi))`` with
    ``0 log 0 = 0``.
    """
    p = _values(p_hat)
    q = _values(pi)
    if p.shape != q.shape:
        raise ValueError(f"probability vectors differ in length: {p.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise ValueError("model cell probabilities must be strictly positive")
    b = as_tuning(beta).beta
    if b == 0:
        observed = p > 0
        return float(np.sum(p[observed] * np.log(p[observed] / q[observed])))
    return float(np.sum(q ** (1 + b) - (1 + 1 / b) * q**b * p + p ** (1 + b) / b))


def weighted_residuals(p_hat: np.ndarray, pi: np.ndarray, beta: float) -> np.ndarray:
    """pi^(beta-1) * (p_hat - pi): the beta = 0 residuals down-weighted by pi^beta."""
    return pi ** (beta - 1) * (p_hat - pi)


def beta_score(
    theta: ModelParams,
    p_hat: EmpiricalProbs | np.ndarray,
    d: StepStressDesign,
    beta: TuningParam | float,
) -> np.ndarray:
    """Estimating function ``W^T diag(pi^(beta-1)) (p_hat - pi)``.

    The gradient of ``dpd_loss`` with respect to theta is ``-(beta + 1)`` times
    this vector; the constant factor is omitted because it leaves the roots
    unchanged. At beta = 0 this is the maximum likelihood score divided by N.
    """
    p = _values(p_hat)
    pi = cell_probabilities(theta, d).values
    if p.shape != pi.shape:
        raise ValueError(f"empirical vector has {len(p)} cells, design has {len(pi)}")
    W = cell_prob_jacobian(theta, d)
    return W.T @ weighted_residuals(p, pi, as_tuning(beta).beta)
