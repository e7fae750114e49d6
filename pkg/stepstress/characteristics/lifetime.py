"""Lifetime characteristics at a constant normal-operating stress x0.

All characteristics come with analytic gradients so that the delta method
can turn a sandwich covariance into standard errors and truncated Wald
intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx

from stepstress.core.errors import NumericalError
from stepstress.core.model import (
    acceleration_factor,
    constant_stress_cdf,
    constant_stress_reliability,
    invert_cumulative_baseline,
)
from stepstress.core.types import ModelParams
from stepstress.estimation.asymptotics import AsymptoticCovariance, wald_ci
from stepstress.utils.helpers import finite_or_none

_QUAD_RTOL = 1e-10
_QUANTILE_TOL = 1e-10
_PSD_TOL = 1e-12
# Above this z = gamma0 * sqrt(c / gamma1) the moment recurrence loses digits.
_RECURRENCE_Z_MAX = 3.0
_MILLS_DEPTH = 200


@dataclass(frozen=True, slots=True)
class NocQuery:
    """Where and what to evaluate: NOC stress, mission time, quantile probability, CI level."""

    x0: float
    t0: float = 1.0
    p: float = 0.5
    level: float = 0.95

    def __post_init__(self) -> None:
        if not math.isfinite(self.x0):
            raise ValueError(f"x0 must be finite, got {self.x0}")
        if not (math.isfinite(self.t0) and self.t0 >= 0):
            raise ValueError(f"t0 must be >= 0, got {self.t0}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 < self.level < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")


@dataclass(slots=True)
class CharacteristicEstimate:
    """Point value, gradient in theta and (with a covariance) delta-method SE and interval."""

    name: str
    value: float
    gradient: np.ndarray
    std_error: float | None = None
    ci: tuple[float, float] | None = None
    bounds: tuple[float | None, float | None] = field(default=(0.0, None))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": finite_or_none(self.value),
            "gradient": [finite_or_none(g) for g in self.gradient],
            "stdError": finite_or_none(self.std_error),
            "ciLower": None if self.ci is None else finite_or_none(self.ci[0]),
            "ciUpper": None if self.ci is None else finite_or_none(self.ci[1]),
        }


def _factor(theta: ModelParams, x0: float) -> float:
    return acceleration_factor(x0, theta.a1)


def cdf_at(theta: ModelParams, t: float, x0: float) -> float:
    """F(t) at constant stress x0."""
    return constant_stress_cdf(t, theta, x0)


def hazard_rate(theta: ModelParams, t: float, x0: float) -> float:
    """h(t) = exp(a1 x0) h0(t)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return _factor(theta, x0) * float(theta.baseline.rate(t))


def quantile(theta: ModelParams, p: float, x0: float) -> float:
    """Time by which a fraction p of units operated at x0 have failed."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    c = _factor(theta, x0)
    q = invert_cumulative_baseline(theta.baseline, -math.log1p(-p) / c)
    achieved = cdf_at(theta, q, x0)
    if abs(achieved - p) >= _QUANTILE_TOL:
        raise NumericalError(
            "quantile root does not reproduce p", {"p": p, "achieved": achieved, "quantile": q}
        )
    return q


def quantile_gradient(theta: ModelParams, p: float, x0: float) -> np.ndarray:
    """Implicit derivative of the p-quantile: dQ/dgamma_i = -Q^(i+1)/((i+1) h0(Q))."""
    q = quantile(theta, p, x0)
    b = theta.baseline
    rate = float(b.rate(q))
    if rate <= 0:
        raise NumericalError("baseline hazard vanishes at the quantile", {"quantile": q})
    return np.append(-b.integral_basis(q) / rate, -x0 * float(b.integral(q)) / rate)


def _moments(theta: ModelParams, x0: float, powers: Sequence[int]) -> dict[int, float]:
    """Integrals I_k = int_0^inf t^k R(t) dt by adaptive quadrature on [0, inf).

    Time is rescaled by the median so the integrand has unit scale.
    """
    scale = quantile(theta, 0.5, x0)
    c = _factor(theta, x0)
    b = theta.baseline
    out = {}
    for k in powers:

        def integrand(u: float, k: int = k) -> float:
            t = scale * u
            return u**k * math.exp(-c * float(b.integral(t)))

        result = quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=_QUAD_RTOL, limit=200, full_output=1)
        value, abserr = result[0], result[1]
        if len(result) > 3:
            raise NumericalError(
                "mean-lifetime quadrature did not reach the requested tolerance",
                {"power": k, "abserr": abserr, "value": value, "detail": str(result[3])},
            )
        out[k] = scale ** (k + 1) * value
    return out


def _mills_tail(z: float) -> tuple[float, float]:
    """First two tails A_1, A_2 of the continued fraction R(z) = 1 / (z + A_1), A_n = 1 / (z + (n+1) A_{n+1})."""
    tail = 0.0
    a1 = a2 = 0.0
    for n in range(_MILLS_DEPTH, 0, -1):
        tail = 1.0 / (z + (n + 1) * tail)
        if n == 2:
            a2 = tail
        elif n == 1:
            a1 = tail
    return a1, a2


def _linear_moments(g0: float, g1: float, c: float) -> tuple[float, float, float]:
    """(E, I_1, I_2) for a linear baseline in closed form.

    With u = t sqrt(c g1) and z = g0 sqrt(c / g1) the integrals reduce to
    J_k(z) = int_0^inf u^k exp(-z u - u^2 / 2) du, and J_0 is the Mills ratio.
    """
    if g1 == 0:
        mean = 1.0 / (c * g0)
        return mean, mean**2, 2.0 * mean**3
    scale = c * g1
    z = g0 * math.sqrt(c / g1)
    j0 = math.sqrt(math.pi / 2.0) * float(erfcx(z / math.sqrt(2.0)))
    if z <= _RECURRENCE_Z_MAX:
        # Integration by parts: z J_k + J_{k+1} = k J_{k-1}.
        j1 = 1.0 - z * j0
        j2 = j0 - z * j1
    else:
        # The recurrence cancels here; J_k = k! R A_1 ... A_k has no subtraction.
        a1, a2 = _mills_tail(z)
        j1 = j0 * a1
        j2 = 2.0 * j0 * a1 * a2
    return j0 / math.sqrt(scale), j1 / scale, j2 / scale**1.5


def mean_lifetime(theta: ModelParams, x0: float) -> float:
    """E[T] at stress x0; closed form for linear baselines, quadrature otherwise."""
    g = theta.baseline.coefficients
    c = _factor(theta, x0)
    if len(g) == 2 or g[2] == 0:
        return _linear_moments(g[0], g[1], c)[0]
    return _moments(theta, x0, (0,))[0]


def mean_lifetime_gradient(theta: ModelParams, x0: float) -> np.ndarray:
    """dE/dtheta.

    dE/dgamma_i = -c I_{i+1} / (i+1) and dE/da1 = x0 * sum_i gamma_i dE/dgamma_i,
    both obtained by differentiating under the integral sign.
    """
    g = theta.baseline.coefficients
    c = _factor(theta, x0)
    n = len(g)
    moments: dict[int, float] = {}
    if g[n - 1] == 0 or n == 2:
        moments.update(enumerate(_linear_moments(g[0], g[1], c)))
    missing = [k for k in range(1, n + 1) if k not in moments]
    if missing:
        moments.update(_moments(theta, x0, missing))
    d_gamma = np.array([-c * moments[i + 1] / (i + 1) for i in range(n)])
    return np.append(d_gamma, x0 * float(np.dot(g, d_gamma)))


def closed_form_mean_a1_partial(theta: ModelParams, x0: float) -> float:
    """The closed form (1 - exp(a1 x0)) E[T] x0 once proposed for dE/da1.

    Kept only so it can be compared with the correct derivative; it is not used
    for inference.
    """
    return (1.0 - _factor(theta, x0)) * mean_lifetime(theta, x0) * x0


def reliability_gradient_at(theta: ModelParams, t0: float, x0: float) -> np.ndarray:
    b = theta.baseline
    c = _factor(theta, x0)
    r = constant_stress_reliability(t0, theta, x0)
    return -r * c * np.append(b.integral_basis(t0), float(b.integral(t0)) * x0)


def hazard_gradient_at(theta: ModelParams, t0: float, x0: float) -> np.ndarray:
    b = theta.baseline
    c = _factor(theta, x0)
    return c * np.append(b.rate_basis(t0), float(b.rate(t0)) * x0)


def characteristic_ci(
    value: float,
    gradient: np.ndarray,
    sigma: np.ndarray,
    n_units: int,
    level: float = 0.95,
    bounds: tuple[float | None, float | None] = (None, None),
) -> tuple[float, tuple[float, float]]:
    """Delta-method standard error sqrt(g' (Sigma / N) g) and the truncated Wald interval."""
    g = np.asarray(gradient, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (len(g), len(g)):
        raise ValueError(f"covariance shape {sigma.shape} does not match gradient length {len(g)}")
    variance = float(g @ sigma @ g) / n_units
    if variance < -_PSD_TOL:
        raise NumericalError("delta-method variance is negative; covariance is not PSD", {"variance": variance})
    se = math.sqrt(max(variance, 0.0))
    return se, wald_ci(value, se, level, lower_bound=bounds[0], upper_bound=bounds[1])


def _estimate(
    name: str,
    value: float,
    gradient: np.ndarray,
    covariance: AsymptoticCovariance | None,
    level: float,
    bounds: tuple[float | None, float | None],
) -> CharacteristicEstimate:
    est = CharacteristicEstimate(name, value, gradient, bounds=bounds)
    if covariance is not None:
        est.std_error, est.ci = characteristic_ci(
            value, gradient, covariance.sigma, covariance.n_units, level, bounds
        )
    return est


def reliability_at(
    theta: ModelParams,
    t0: float,
    x0: float,
    covariance: AsymptoticCovariance | None = None,
    level: float = 0.95,
) -> CharacteristicEstimate:
    """R(t0) at stress x0; the interval is truncated to [0, 1]."""
    value = constant_stress_reliability(t0, theta, x0)
    return _estimate(
        "reliability", value, reliability_gradient_at(theta, t0, x0), covariance, level, (0.0, 1.0)
    )


def hazard_rate_at(
    theta: ModelParams,
    t0: float,
    x0: float,
    covariance: AsymptoticCovariance | None = None,
    level: float = 0.95,
) -> CharacteristicEstimate:
    """h(t0) at stress x0; the interval is truncated at 0."""
    value = hazard_rate(theta, t0, x0)
    return _estimate("hazard", value, hazard_gradient_at(theta, t0, x0), covariance, level, (0.0, None))


def mean_lifetime_at(
    theta: ModelParams,
    x0: float,
    covariance: AsymptoticCovariance | None = None,
    level: float = 0.95,
) -> CharacteristicEstimate:
    return _estimate(
        "mean", mean_lifetime(theta, x0), mean_lifetime_gradient(theta, x0), covariance, level, (0.0, None)
    )


def quantile_at(
    theta: ModelParams,
    p: float,
    x0: float,
    covariance: AsymptoticCovariance | None = None,
    level: float = 0.95,
    name: str | None = None,
) -> CharacteristicEstimate:
    return _estimate(
        name or f"quantile_{p:g}",
        quantile(theta, p, x0),
        quantile_gradient(theta, p, x0),
        covariance,
        level,
        (0.0, None),
    )


def characterize(
    theta: ModelParams,
    query: NocQuery,
    covariance: AsymptoticCovariance | None = None,
    quantile_probs: Sequence[float] = (),
) -> dict[str, CharacteristicEstimate]:
    """Mean, median, requested quantiles, reliability and hazard at the query's x0 and t0."""
    out = {
        "mean": mean_lifetime_at(theta, query.x0, covariance, query.level),
        "median": quantile_at(theta, 0.5, query.x0, covariance, query.level, name="median"),
    }
    probs = list(quantile_probs)
    if query.p != 0.5 and query.p not in probs:
        probs.insert(0, query.p)
    for p in probs:
        est = quantile_at(theta, p, query.x0, covariance, query.level)
        out[est.name] = est
    out["reliability"] = reliability_at(theta, query.t0, query.x0, covariance, query.level)
    out["hazard"] = hazard_rate_at(theta, query.t0, query.x0, covariance, query.level)
    return out
