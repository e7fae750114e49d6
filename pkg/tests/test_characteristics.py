"""Tests for lifetime characteristics at normal operating conditions."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stepstress.characteristics.lifetime import (
    CharacteristicEstimate,
    NocQuery,
    closed_form_mean_a1_partial,
    cdf_at,
    characteristic_ci,
    characterize,
    hazard_gradient_at,
    hazard_rate_at,
    hazard_rate,
    mean_lifetime,
    mean_lifetime_gradient,
    quantile,
    quantile_gradient,
    reliability_at,
    reliability_gradient_at,
)
from stepstress.core.errors import NumericalError
from stepstress.core.model import constant_stress_reliability
from stepstress.core.types import BaselineHazard, ModelParams, StepStressDesign
from stepstress.estimation.asymptotics import AsymptoticCovariance, asymptotic_covariance

X0 = 0.3
T0 = 5.0
LINEAR_THETA = ModelParams(BaselineHazard.linear(math.exp(-4.0), math.exp(-5.3)), 0.5)
QUADRATIC_THETA = ModelParams(
    BaselineHazard.quadratic(math.exp(-4.0), math.exp(-7.0), math.exp(-6.0)), 0.5
)
DESIGN = StepStressDesign(0.5, 2.5, 14.0, tuple(float(t) for t in range(2, 23, 2)), 200)
PROBS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]

linear_params = st.builds(
    lambda g0, g1, a1: ModelParams(BaselineHazard.linear(math.exp(g0), math.exp(g1)), a1),
    st.floats(-7.0, -1.0),
    st.floats(-9.0, -2.0),
    st.floats(0.1, 2.0),
)


def _fd_gradient(fn, theta: ModelParams, rel_step: float) -> np.ndarray:
    out = []
    for i, value in enumerate(theta.theta):
        h = rel_step * value
        up, down = theta.theta.copy(), theta.theta.copy()
        up[i] += h
        down[i] -= h
        out.append(
            (fn(ModelParams.from_theta(theta.kind, up)) - fn(ModelParams.from_theta(theta.kind, down)))
            / (2 * h)
        )
    return np.array(out)


def _integrated_mean(theta: ModelParams, x0: float) -> float:
    scale = quantile(theta, 0.5, x0)
    value, _ = quad(
        lambda u: constant_stress_reliability(scale * u, theta, x0),
        0.0,
        math.inf,
        epsabs=0.0,
        epsrel=1e-12,
        limit=500,
    )
    return scale * value


def test_noc_query_validation():
    with pytest.raises(ValueError, match="p must lie"):
        NocQuery(0.3, 5.0, 1.0)
    with pytest.raises(ValueError, match="t0"):
        NocQuery(0.3, -1.0)
    with pytest.raises(ValueError, match="level"):
        NocQuery(0.3, 5.0, 0.5, 1.5)


@pytest.mark.parametrize("theta", [LINEAR_THETA, QUADRATIC_THETA])
@pytest.mark.parametrize("p", PROBS)
def test_quantile_inverts_the_cdf(theta, p):
    q = quantile(theta, p, X0)
    assert q > 0
    assert abs(cdf_at(theta, q, X0) - p) < 1e-10


def test_quantiles_increase_with_p():
    values = [quantile(QUADRATIC_THETA, p, X0) for p in PROBS]
    assert values == sorted(values)
    with pytest.raises(ValueError, match="p must lie"):
        quantile(LINEAR_THETA, 1.0, X0)


@settings(max_examples=50, deadline=None)
@given(linear_params, st.floats(-1.0, 1.0))
def test_linear_mean_matches_quadrature(theta, x0):
    assert mean_lifetime(theta, x0) == pytest.approx(_integrated_mean(theta, x0), rel=1e-6)


@pytest.mark.parametrize(
    "theta",
    [
        QUADRATIC_THETA,
        ModelParams(BaselineHazard.quadratic(0.0, 0.0, 0.002), 0.4),
        ModelParams(BaselineHazard.linear(0.05, 0.0), 0.4),
        ModelParams(BaselineHazard.linear(0.0, 0.02), 0.4),
    ],
)
def test_mean_matches_quadrature_for_boundary_and_quadratic_baselines(theta):
    assert mean_lifetime(theta, X0) == pytest.approx(_integrated_mean(theta, X0), rel=1e-6)


def test_exponential_mean_closed_form():
    theta = ModelParams(BaselineHazard.linear(0.05, 0.0), 0.4)
    assert mean_lifetime(theta, X0) == pytest.approx(1.0 / (0.05 * math.exp(0.12)), rel=1e-12)


def test_hazard_rate_value():
    g0, g1 = LINEAR_THETA.baseline.coefficients
    assert hazard_rate(LINEAR_THETA, T0, X0) == pytest.approx(math.exp(0.15) * (g0 + g1 * T0))


@pytest.mark.parametrize("theta", [LINEAR_THETA, QUADRATIC_THETA])
def test_closed_form_gradients_match_finite_differences(theta):
    np.testing.assert_allclose(
        reliability_gradient_at(theta, T0, X0),
        _fd_gradient(lambda th: constant_stress_reliability(T0, th, X0), theta, 1e-6),
        rtol=1e-5,
    )
    np.testing.assert_allclose(
        hazard_gradient_at(theta, T0, X0),
        _fd_gradient(lambda th: hazard_rate(th, T0, X0), theta, 1e-6),
        rtol=1e-5,
    )
    for p in (0.1, 0.5, 0.9):
        np.testing.assert_allclose(
            quantile_gradient(theta, p, X0),
            _fd_gradient(lambda th, p=p: quantile(th, p, X0), theta, 1e-6),
            rtol=1e-5,
        )


def test_linear_mean_gradient_matches_finite_differences():
    np.testing.assert_allclose(
        mean_lifetime_gradient(LINEAR_THETA, X0),
        _fd_gradient(lambda th: mean_lifetime(th, X0), LINEAR_THETA, 1e-6),
        rtol=1e-5,
    )


def test_quadratic_mean_gradient_matches_finite_differences():
    # Richardson-extrapolated central differences of a 1e-12 quadrature: O(h^4) truncation,
    # quadrature noise about 1e-12 / h relative to E.
    coarse = _fd_gradient(lambda th: _integrated_mean(th, X0), QUADRATIC_THETA, 1e-3)
    fine = _fd_gradient(lambda th: _integrated_mean(th, X0), QUADRATIC_THETA, 5e-4)
    np.testing.assert_allclose(
        mean_lifetime_gradient(QUADRATIC_THETA, X0), (4 * fine - coarse) / 3, rtol=1e-6
    )


def test_closed_form_a1_partial_disagrees_with_finite_differences():
    fd = _fd_gradient(lambda th: mean_lifetime(th, X0), LINEAR_THETA, 1e-6)[-1]
    assert mean_lifetime_gradient(LINEAR_THETA, X0)[-1] == pytest.approx(fd, rel=1e-5)
    assert closed_form_mean_a1_partial(LINEAR_THETA, X0) != pytest.approx(fd, rel=1e-2)


def _integrated_moment(theta: ModelParams, x0: float, k: int) -> float:
    scale = quantile(theta, 0.5, x0)
    value, _ = quad(
        lambda u: u**k * constant_stress_reliability(scale * u, theta, x0),
        0.0,
        math.inf,
        epsabs=0.0,
        epsrel=1e-12,
        limit=500,
    )
    return scale ** (k + 1) * value


@pytest.mark.parametrize("z", [0.5, 2.999, 3.001, 10.0, 54.0])
def test_linear_moments_match_quadrature_on_both_sides_of_the_switch(z):
    # With x0 = 0 and gamma1 = 1, z = gamma0 * sqrt(c / gamma1) is gamma0 itself.
    theta = ModelParams(BaselineHazard.linear(z, 1.0), 0.5)
    expected = [
        -_integrated_moment(theta, 0.0, 1),
        -_integrated_moment(theta, 0.0, 2) / 2,
    ]
    assert mean_lifetime(theta, 0.0) == pytest.approx(_integrated_moment(theta, 0.0, 0), rel=1e-10)
    np.testing.assert_allclose(mean_lifetime_gradient(theta, 0.0)[:2], expected, rtol=1e-9)
    assert mean_lifetime_gradient(theta, 0.0)[2] == 0.0


def test_mean_gradient_is_continuous_across_the_switch():
    below = mean_lifetime_gradient(ModelParams(BaselineHazard.linear(3.0 - 1e-9, 1.0), 0.5), 0.0)
    above = mean_lifetime_gradient(ModelParams(BaselineHazard.linear(3.0 + 1e-9, 1.0), 0.5), 0.0)
    np.testing.assert_allclose(below[:2], above[:2], rtol=1e-8)


def test_quadratic_with_zero_gamma2_reduces_to_linear():
    g0, g1 = LINEAR_THETA.baseline.coefficients
    reduced = ModelParams(BaselineHazard.quadratic(g0, g1, 0.0), LINEAR_THETA.a1)
    shared = [0, 1, 3]
    characteristics = {
        "mean": (lambda th: mean_lifetime(th, X0), lambda th: mean_lifetime_gradient(th, X0)),
        "median": (lambda th: quantile(th, 0.5, X0), lambda th: quantile_gradient(th, 0.5, X0)),
        "q90": (lambda th: quantile(th, 0.9, X0), lambda th: quantile_gradient(th, 0.9, X0)),
        "reliability": (
            lambda th: constant_stress_reliability(T0, th, X0),
            lambda th: reliability_gradient_at(th, T0, X0),
        ),
        "hazard": (lambda th: hazard_rate(th, T0, X0), lambda th: hazard_gradient_at(th, T0, X0)),
    }
    for name, (value, gradient) in characteristics.items():
        assert value(reduced) == pytest.approx(value(LINEAR_THETA), rel=1e-8), name
        np.testing.assert_allclose(
            gradient(reduced)[shared], gradient(LINEAR_THETA), rtol=1e-8, err_msg=name
        )


@pytest.mark.parametrize("theta", [LINEAR_THETA, QUADRATIC_THETA])
def test_higher_stress_shortens_lifetimes(theta):
    stresses = [-1.0, -0.5, 0.0, X0, 1.0, 2.0]
    means = [mean_lifetime(theta, x0) for x0 in stresses]
    medians = [quantile(theta, 0.5, x0) for x0 in stresses]
    reliabilities = [constant_stress_reliability(T0, theta, x0) for x0 in stresses]
    assert all(a > b for a, b in zip(means, means[1:]))
    assert all(a > b for a, b in zip(medians, medians[1:]))
    assert all(a > b for a, b in zip(reliabilities, reliabilities[1:]))


def test_delta_method_interval():
    sigma = np.array([[4.0, 0.0], [0.0, 1.0]])
    se, (lo, hi) = characteristic_ci(1.0, np.array([1.0, 2.0]), sigma, 100, 0.95)
    assert se == pytest.approx(math.sqrt(8.0 / 100))
    assert lo == pytest.approx(1.0 - 1.959963984540054 * se)
    assert hi == pytest.approx(1.0 + 1.959963984540054 * se)
    with pytest.raises(NumericalError, match="not PSD"):
        characteristic_ci(1.0, np.array([1.0, 0.0]), -np.eye(2), 100)
    with pytest.raises(ValueError, match="shape"):
        characteristic_ci(1.0, np.array([1.0]), np.eye(2), 100)


def test_reliability_interval_stays_in_unit_interval():
    cov = AsymptoticCovariance(np.eye(3) * 1e6, 10, LINEAR_THETA.names)
    est = reliability_at(LINEAR_THETA, T0, X0, cov)
    assert 0.0 <= est.ci[0] <= est.value <= est.ci[1] <= 1.0


def test_hazard_interval_is_truncated_at_zero():
    cov = AsymptoticCovariance(np.eye(3) * 1e6, 10, LINEAR_THETA.names)
    est = hazard_rate_at(LINEAR_THETA, T0, X0, cov)
    assert est.value == pytest.approx(hazard_rate(LINEAR_THETA, T0, X0))
    assert est.ci[0] == 0.0 < est.value < est.ci[1]
    assert hazard_rate_at(LINEAR_THETA, T0, X0).ci is None


def test_characterize_bundles_every_characteristic():
    cov = asymptotic_covariance(LINEAR_THETA, DESIGN, 0.4, 200)
    query = NocQuery(X0, T0, 0.5, 0.95)
    result = characterize(LINEAR_THETA, query, cov, quantile_probs=[0.1])
    assert list(result) == ["mean", "median", "quantile_0.1", "reliability", "hazard"]
    for est in result.values():
        assert isinstance(est, CharacteristicEstimate)
        assert est.std_error is not None and est.std_error > 0
        assert est.ci[0] <= est.value <= est.ci[1]
    assert result["median"].value == pytest.approx(quantile(LINEAR_THETA, 0.5, X0))
    data = result["reliability"].to_dict()
    assert set(data) == {"name", "value", "gradient", "stdError", "ciLower", "ciUpper"}


def test_characterize_adds_the_query_quantile():
    result = characterize(LINEAR_THETA, NocQuery(X0, T0, p=0.25))
    assert "quantile_0.25" in result
    assert result["mean"].ci is None
