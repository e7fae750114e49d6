"""Step-stress proportional-hazards model evaluation.

The hazard at stress x is ``h0(t) * exp(a1 * x)`` with a polynomial baseline
``h0``. Under the cumulative exposure model the post-change cumulative hazard
is ``exp(a1 * x2) * Lambda(t + s)``, where the shifting time ``s <= 0`` keeps
the cumulative hazard continuous at the stress-change time tau.

Every function here is pure; arrays returned to callers are fresh copies.
"""

from __future__ import annotations

import math

import numpy as np
from loguru import logger
from scipy.optimize import brentq, root_scalar

from stepstress.core.errors import NumericalError
from stepstress.core.types import (
    PROB_ATOL,
    BaselineHazard,
    CellProbabilities,
    GroupedCounts,
    ModelParams,
    StepStressDesign,
)

# exp() overflows just above 709.78; past this magnitude products are formed in log space.
_LOG_GUARD = 700.0
_LOG_MAX = math.log(np.finfo(float).max)
_ROOT_RTOL = 1e-10


def _check_times(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"times must be finite and >= 0, got {t!r}")
    return arr


def _as_output(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else np.array(values, dtype=float)


def _scale(exponent: float, values) -> np.ndarray:
    """Return ``exp(exponent) * values``, forming the product in log space for huge exponents."""
    values = np.asarray(values, dtype=float)
    if abs(exponent) <= _LOG_GUARD:
        return np.asarray(math.exp(exponent) * values)
    with np.errstate(divide="ignore", over="ignore"):
        return np.asarray(np.sign(values) * np.exp(exponent + np.log(np.abs(values))))


def acceleration_factor(x: float, a1: float) -> float:
    """Proportional-hazards multiplier ``exp(a1 * x)``."""
    if not math.isfinite(a1) or not math.isfinite(x):
        raise ValueError(f"a1 and x must be finite, got a1={a1}, x={x}")
    exponent = a1 * x
    if exponent > _LOG_MAX:
        raise NumericalError(
            f"acceleration factor overflows: a1*x = {exponent:.6g}",
            {"exponent": exponent, "a1": a1, "x": x},
        )
    return math.exp(exponent)


def baseline_hazard(t, b: BaselineHazard):
    """Baseline hazard h0(t); scalar in, scalar out."""
    arr = _check_times(t)
    return _as_output(b.rate(arr), t)


def invert_cumulative_baseline(b: BaselineHazard, target: float) -> float:
    """Solve ``Lambda(u) = target`` for ``u >= 0``.

    Lambda is strictly increasing and convex on [0, inf), so the root is unique.
    Linear baselines (and quadratic ones with gamma2 = 0) use the cancellation-free
    closed form; otherwise Newton starts from an upper bound, with a bracketed
    Brent fallback.
    """
    if not math.isfinite(target) or target < 0:
        raise ValueError(f"target cumulative hazard must be finite and >= 0, got {target}")
    if target == 0:
        return 0.0
    g = b.coefficients
    if len(g) == 2 or g[2] == 0:
        g0, g1 = g[0], g[1]
        return 2.0 * target / (g0 + math.sqrt(g0 * g0 + 2.0 * g1 * target))

    def residual(u: float) -> float:
        return float(b.integral(u)) - target

    def slope(u: float) -> float:
        return float(b.rate(u))

    upper = (3.0 * target / g[2]) ** (1.0 / 3.0)
    if g[0] > 0 or g[1] > 0:
        upper = min(upper, invert_cumulative_baseline(BaselineHazard.linear(g[0], g[1]), target))
    try:
        sol = root_scalar(residual, fprime=slope, x0=upper, method="newton", xtol=1e-15, rtol=1e-14)
        if sol.converged and sol.root > 0 and abs(residual(sol.root)) <= _ROOT_RTOL * target:
            return float(sol.root)
    except (RuntimeError, ZeroDivisionError, ArithmeticError):
        pass
    logger.debug("Newton inversion stalled for target={}; falling back to brentq", target)
    hi = max(upper, 1e-300)
    while residual(hi) < 0:
        hi *= 2.0
        if not math.isfinite(hi):
            raise NumericalError("could not bracket the cumulative-hazard root", {"target": target})
    return float(brentq(residual, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def solve_shifting_time(b: BaselineHazard, a1: float, x1: float, x2: float, tau: float) -> float:
    """Shifting time s for the given baseline, stress coefficient, stress levels and change time.

    Solves ``Lambda(tau + s) = exp(a1 * (x1 - x2)) * Lambda(tau)`` for the
    unique s with ``tau + s > 0``. ``x1 == x2`` gives 0.
    """
    if x1 == x2:
        return 0.0
    ratio = math.exp(a1 * (x1 - x2))
    target = ratio * float(b.integral(tau))
    u = invert_cumulative_baseline(b, target)
    s = u - tau
    residual = abs(float(b.integral(u)) - target) / target if target > 0 else 0.0
    diagnostics = {"s": s, "tau": tau, "target": target, "relative_residual": residual}
    if residual >= _ROOT_RTOL:
        raise NumericalError("shifting-time root residual too large", diagnostics)
    if not u > 0:
        raise NumericalError("shifting time leaves no positive exposure (tau + s <= 0)", diagnostics)
    if s > 0 and x1 < x2:
        raise NumericalError("shifting time is positive for an increasing stress step", diagnostics)
    return s


def shifting_time(p: ModelParams, d: StepStressDesign) -> float:
    """Nonpositive shifting time of the step-stress cumulative exposure model."""
    return solve_shifting_time(p.baseline, p.a1, d.x1, d.x2, d.tau)


def shifting_time_gradient(p: ModelParams, d: StepStressDesign, s: float | None = None) -> np.ndarray:
    """Implicit derivative of the shifting time with respect to (gamma..., a1)."""
    b = p.baseline
    if s is None:
        s = shifting_time(p, d)
    u = d.tau + s
    ratio = math.exp(p.a1 * (d.x1 - d.x2))
    rate = float(b.rate(u))
    if rate <= 0:
        raise NumericalError("baseline hazard vanishes at tau + s", {"u": u})
    d_gamma = (ratio * b.integral_basis(d.tau) - b.integral_basis(u)) / rate
    d_a1 = (d.x1 - d.x2) * ratio * float(b.integral(d.tau)) / rate
    return np.append(d_gamma, d_a1)


def _cumulative_hazard(t: np.ndarray, p: ModelParams, d: StepStressDesign, s: float) -> np.ndarray:
    b = p.baseline
    before = t <= d.tau
    early = _scale(p.a1 * d.x1, b.integral(np.where(before, t, 0.0)))
    late = _scale(p.a1 * d.x2, b.integral(np.where(before, d.tau + s, t + s)))
    return np.where(before, early, late)


def _cumulative_hazard_gradient(
    t: np.ndarray, p: ModelParams, d: StepStressDesign, s: float, ds: np.ndarray
) -> np.ndarray:
    b = p.baseline
    before = (t <= d.tau)[..., None]
    t_early = np.where(t <= d.tau, t, 0.0)
    u = np.where(t <= d.tau, d.tau + s, t + s)
    rate_u = b.rate(u)

    h_early = _scale(p.a1 * d.x1, b.integral(t_early))
    h_late = _scale(p.a1 * d.x2, b.integral(u))
    early = np.concatenate(
        [_scale(p.a1 * d.x1, b.integral_basis(t_early)), (d.x1 * h_early)[..., None]], axis=-1
    )
    late_gamma = _scale(p.a1 * d.x2, b.integral_basis(u) + rate_u[..., None] * ds[:-1])
    late_a1 = d.x2 * h_late + _scale(p.a1 * d.x2, rate_u * ds[-1])
    late = np.concatenate([late_gamma, late_a1[..., None]], axis=-1)
    return np.where(before, early, late)


def cumulative_hazard(t, p: ModelParams, d: StepStressDesign):
    """Cumulative hazard H(t) of a unit run through the step-stress plan."""
    arr = _check_times(t)
    return _as_output(_cumulative_hazard(arr, p, d, shifting_time(p, d)), t)


def cumulative_hazard_gradient(t, p: ModelParams, d: StepStressDesign) -> np.ndarray:
    """dH(t)/dtheta; shape (p,) for scalar t, (n, p) for a vector of times."""
    arr = _check_times(t)
    s = shifting_time(p, d)
    return _cumulative_hazard_gradient(arr, p, d, s, shifting_time_gradient(p, d, s))


def step_reliability(t, p: ModelParams, d: StepStressDesign):
    """R(t) = exp(-H(t)) under the step-stress plan."""
    arr = _check_times(t)
    return _as_output(np.exp(-_cumulative_hazard(arr, p, d, shifting_time(p, d))), t)


def reliability_gradient(t, p: ModelParams, d: StepStressDesign) -> np.ndarray:
    """dR(t)/dtheta = -R(t) * dH(t)/dtheta."""
    arr = _check_times(t)
    s = shifting_time(p, d)
    reliability = np.exp(-_cumulative_hazard(arr, p, d, s))
    grad = _cumulative_hazard_gradient(arr, p, d, s, shifting_time_gradient(p, d, s))
    return -reliability[..., None] * grad


def unchecked_cell_probabilities(
    p: ModelParams, d: StepStressDesign, s: float | None = None
) -> np.ndarray:
    """Cell masses without the positivity check (the optimizer floors them itself)."""
    if s is None:
        s = shifting_time(p, d)
    hazard = _cumulative_hazard(np.asarray(d.inspection_times), p, d, s)
    hazard_prev = np.concatenate(([0.0], hazard[:-1]))
    survival_prev = np.exp(-hazard_prev)
    # R(t_{j-1}) - R(t_j) written with expm1 so early, tiny cells keep their digits.
    failures = -survival_prev * np.expm1(-(hazard - hazard_prev))
    return np.append(failures, math.exp(-hazard[-1]))


def cell_probabilities(p: ModelParams, d: StepStressDesign) -> CellProbabilities:
    """Multinomial probabilities of failing in each inspection interval, then of surviving."""
    pi = unchecked_cell_probabilities(p, d)
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        bad = [j + 1 for j, v in enumerate(pi) if not v > 0]
        raise NumericalError(
            "nonpositive cell probability", {"cells": bad, "pi": pi.tolist(), "theta": p.theta.tolist()}
        )
    total = float(pi.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise NumericalError("cell probabilities do not sum to one", {"sum": total})
    return CellProbabilities(pi)


def cell_prob_jacobian(p: ModelParams, d: StepStressDesign) -> np.ndarray:
    """Jacobian W of the cell probabilities, shape (L+1, p); row j is dpi_j/dtheta."""
    times = np.asarray(d.inspection_times)
    s = shifting_time(p, d)
    reliability = np.exp(-_cumulative_hazard(times, p, d, s))
    grad = _cumulative_hazard_gradient(times, p, d, s, shifting_time_gradient(p, d, s))
    d_rel = -reliability[:, None] * grad
    d_prev = np.vstack([np.zeros((1, d_rel.shape[1])), d_rel[:-1]])
    return np.vstack([d_prev - d_rel, d_rel[-1:]])


def log_likelihood(counts: GroupedCounts, p: ModelParams, d: StepStressDesign) -> float:
    """Multinomial log-likelihood sum_j n_j log pi_j, without the combinatorial constant."""
    counts.check_design(d)
    pi = cell_probabilities(p, d).values
    n = counts.array
    observed = n > 0
    return float(np.sum(n[observed] * np.log(pi[observed])))


def constant_stress_cumulative_hazard(t, p: ModelParams, x0: float):
    """exp(a1 * x0) * Lambda(t): cumulative hazard when stress stays at x0."""
    arr = _check_times(t)
    return _as_output(_scale(p.a1 * x0, p.baseline.integral(arr)), t)


def constant_stress_reliability(t, p: ModelParams, x0: float):
    arr = _check_times(t)
    return _as_output(np.exp(-_scale(p.a1 * x0, p.baseline.integral(arr))), t)


def constant_stress_cdf(t, p: ModelParams, x0: float):
    arr = _check_times(t)
    return _as_output(-np.expm1(-_scale(p.a1 * x0, p.baseline.integral(arr))), t)
