"""Interval-censored data generation and adjusted residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from stepstress.core.errors import NumericalError
from stepstress.core.model import cell_probabilities, step_reliability
from stepstress.core.types import GroupedCounts, ModelParams, StepStressDesign


@dataclass(frozen=True, slots=True)
class ContaminationSpec:
    """Inflate the conditional failure probability of one cell by a factor (1 + epsilon)."""

    cell_index: int
    epsilon: float

    def __post_init__(self) -> None:
        if isinstance(self.cell_index, bool) or int(self.cell_index) != self.cell_index or self.cell_index < 1:
            raise ValueError(f"cell_index must be a positive integer, got {self.cell_index}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")

    def check_design(self, d: StepStressDesign) -> None:
        if self.cell_index > d.n_cells:
            raise ValueError(f"contamination cell {self.cell_index} outside 1..{d.n_cells}")


def conditional_probabilities(
    theta: ModelParams, d: StepStressDesign, contamination: ContaminationSpec | None = None
) -> tuple[np.ndarray, bool]:
    """Probability of failing in interval j given survival to t_{j-1}, for j = 1..L.

    Returns the (possibly contaminated) probabilities and whether clamping to
    [0, 1] was needed. Contaminating the survivor cell L+1 inflates the share of
    units alive at t_{L-1} that survive t_L, which lowers q_L.
    """
    pi = cell_probabilities(theta, d).values
    times = np.asarray(d.inspection_times[:-1])
    at_risk = np.concatenate(([1.0], np.atleast_1d(step_reliability(times, theta, d))))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(at_risk > 0, pi[:-1] / at_risk, 1.0)
    q = np.clip(q, 0.0, 1.0)
    clamped = False
    if contamination is not None and contamination.epsilon > 0:
        contamination.check_design(d)
        factor = 1.0 + contamination.epsilon
        j = contamination.cell_index - 1
        if j < d.n_intervals:
            inflated = q[j] * factor
            clamped = inflated > 1.0
            q[j] = min(inflated, 1.0)
        else:
            survive = (1.0 - q[-1]) * factor
            clamped = survive > 1.0
            q[-1] = 1.0 - min(survive, 1.0)
    return q, bool(clamped)


def generate_counts(
    theta: ModelParams,
    d: StepStressDesign,
    contamination: ContaminationSpec | None = None,
    seed: int | np.random.Generator | None = None,
) -> GroupedCounts:
    """Draw one sample by sequential conditional binomials; deterministic for a given seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q, clamped = conditional_probabilities(theta, d, contamination)
    if clamped:
        logger.warning(
            "contaminated probability for cell {} clamped to [0, 1] (epsilon={})",
            contamination.cell_index,
            contamination.epsilon,
        )
    remaining = d.n_units
    counts = []
    for qj in q:
        n = int(rng.binomial(remaining, qj))
        counts.append(n)
        remaining -= n
    counts.append(remaining)
    return GroupedCounts(tuple(counts))


def expected_counts(theta: ModelParams, d: StepStressDesign) -> np.ndarray:
    """N * pi, the noiseless counts (not rounded)."""
    return d.n_units * cell_probabilities(theta, d).values


def adjusted_residuals(counts: GroupedCounts, theta: ModelParams, d: StepStressDesign) -> np.ndarray:
    """sqrt(N) (p_hat - pi) / sqrt(pi (1 - pi)) for every cell."""
    counts.check_design(d)
    n = counts.n_total
    if n == 0:
        raise ValueError("adjusted residuals need at least one observation")
    pi = cell_probabilities(theta, d).values
    variance = pi * (1.0 - pi)
    if np.any(variance <= 0):
        raise NumericalError("a cell probability is 0 or 1; residuals undefined", {"pi": pi.tolist()})
    p_hat = counts.array / n
    return math.sqrt(n) * (p_hat - pi) / np.sqrt(variance)
