"""Tests for MDPDE fitting."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from stepstress.config.schema import SolverOptions
from stepstress.core.errors import NumericalError
from stepstress.core.model import cell_probabilities, log_likelihood
from stepstress.core.types import (
    BaselineHazard,
    BaselineKind,
    GroupedCounts,
    ModelParams,
    StepStressDesign,
)
from stepstress.estimation import optimizer
from stepstress.estimation.asymptotics import asymptotic_covariance
from stepstress.estimation.divergence import TuningParam
from stepstress.estimation.optimizer import FitResult, _exponential_seed, fit_grid, fit_mdpde
from stepstress.simulation.generator import generate_counts

TIMES = tuple(float(t) for t in range(2, 23, 2))
THETA = ModelParams(BaselineHazard.linear(math.exp(-4.0), math.exp(-5.3)), 0.5)
QUADRATIC_THETA = ModelParams(BaselineHazard.quadratic(math.exp(-4.0), 0.0, math.exp(-6.0)), 0.5)


def _design(n_units: int, times=TIMES, tau: float = 14.0) -> StepStressDesign:
    return StepStressDesign(0.5, 2.5, tau, times, n_units)


def _exact_counts(theta: ModelParams, times=TIMES, tau: float = 14.0, n: int = 1_000_000):
    pi = cell_probabilities(theta, _design(n, times, tau)).values
    counts = GroupedCounts(tuple(int(c) for c in np.rint(n * pi)))
    return counts, _design(counts.n_total, times, tau)


@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_recovers_theta_from_exact_probabilities(beta):
    counts, design = _exact_counts(THETA)
    fit = fit_mdpde(counts, design, "linear", beta)
    assert isinstance(fit, FitResult)
    assert fit.converged, fit.message
    np.testing.assert_allclose(fit.theta_hat.theta, THETA.theta, rtol=5e-3)
    assert fit.loss == pytest.approx(0.0, abs=1e-8)
    assert fit.zero_flags == (False, False, False)
    assert len(fit.starts) == SolverOptions().n_starts


def test_recovers_quadratic_theta_from_exact_probabilities():
    times = tuple(float(t) for t in range(1, 13))
    counts, design = _exact_counts(QUADRATIC_THETA, times, 8.0)
    fit = fit_mdpde(counts, design, "quadratic", 0.4)
    assert fit.converged, fit.message
    gamma0, gamma1, gamma2, a1 = fit.theta_hat.theta
    assert gamma0 == pytest.approx(QUADRATIC_THETA.theta[0], rel=2e-2)
    assert gamma1 < 1e-3
    assert gamma2 == pytest.approx(QUADRATIC_THETA.theta[2], rel=2e-2)
    assert a1 == pytest.approx(0.5, rel=2e-2)


def test_beta_zero_matches_direct_likelihood_maximization():
    design = _design(5000)
    counts = generate_counts(THETA, design, seed=7)
    fit = fit_mdpde(counts, design, "linear", 0.0)
    assert fit.converged, fit.message

    def negative_loglik(phi):
        try:
            return -log_likelihood(counts, ModelParams.from_theta("linear", np.exp(phi)), design) / 5000
        except (ValueError, ArithmeticError):
            return 1e10

    direct = minimize(
        negative_loglik,
        np.log(THETA.theta),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 20000, "maxfev": 20000},
    )
    np.testing.assert_allclose(fit.theta_hat.theta, np.exp(direct.x), rtol=1e-4)
    assert -negative_loglik(np.log(fit.theta_hat.theta)) >= -direct.fun - 1e-9


def test_grid_keeps_order_and_reports_every_beta():
    design = _design(200)
    counts = generate_counts(THETA, design, seed=11)
    fits = fit_grid(counts, design, "linear", [0.0, 0.4, 1.0])
    assert [f.beta.beta for f in fits] == [0.0, 0.4, 1.0]
    for f in fits:
        assert f.theta_hat.kind.value == "linear"
        assert np.all(np.isfinite(f.theta_hat.theta))


def test_counts_total_must_match_design():
    counts = GroupedCounts(tuple([10] * 12))
    with pytest.raises(ValueError, match="differs from design n_units"):
        fit_mdpde(counts, _design(200), "linear", 0.0)
    with pytest.raises(ValueError, match="beta"):
        fit_mdpde(counts, _design(120), "linear", -1.0)


def test_small_coefficients_are_reported_as_zero():
    counts, design = _exact_counts(THETA, n=100_000)
    fit = fit_mdpde(counts, design, "linear", 0.0, SolverOptions(zero_threshold=0.01))
    assert fit.zero_flags == (False, True, False)
    assert fit.theta_hat.theta[1] == 0.0
    assert fit.theta_hat.theta[0] > 0.01


def test_all_coefficients_below_threshold_are_kept():
    counts, design = _exact_counts(THETA, n=100_000)
    fit = fit_mdpde(counts, design, "linear", 0.0, SolverOptions(zero_threshold=1.0))
    assert fit.zero_flags == (False, False, False)
    assert np.all(fit.theta_hat.theta > 0)


def test_plug_in_covariance_is_evaluated_at_given_parameters():
    design = _design(200)
    counts = generate_counts(THETA, design, seed=3)
    fit = fit_mdpde(counts, design, "linear", 0.4, plug_in=THETA)
    expected = asymptotic_covariance(THETA, design, 0.4, 200)
    np.testing.assert_allclose(fit.sigma, expected.sigma)
    lo, hi = fit.ci[2]
    assert lo < fit.theta_hat.a1 < hi


def test_confidence_intervals_are_truncated_at_zero():
    design = _design(200)
    counts = generate_counts(THETA, design, seed=5)
    fit = fit_mdpde(counts, design, "linear", 0.2)
    for lo, hi in fit.ci:
        assert 0.0 <= lo <= hi


def test_fit_result_serializes_with_camel_case_keys():
    design = _design(200)
    counts = generate_counts(THETA, design, seed=1)
    data = fit_mdpde(counts, design, "linear", 0.6).to_dict()
    assert data["beta"] == 0.6
    assert data["baseline"] == "linear"
    assert [row["name"] for row in data["parameters"]] == ["gamma0", "gamma1", "a1"]
    assert {"estimate", "stdError", "ciLower", "ciUpper", "zero"} <= set(data["parameters"][0])
    assert data["nUnits"] == 200
    assert len(data["starts"]) == 5
    assert isinstance(data["converged"], bool)


def test_a_failing_beta_does_not_abort_the_grid(monkeypatch):
    design = _design(200)
    counts = generate_counts(THETA, design, seed=11)

    def flaky_fit(counts, d, kind, beta, opts=None, *, plug_in=None):
        if beta.beta == 0.4:
            raise NumericalError("shifting-time root residual too large", {"beta": 0.4})
        return fit_mdpde(counts, d, kind, beta, opts, plug_in=plug_in)

    monkeypatch.setattr(optimizer, "fit_mdpde", flaky_fit)
    fits = fit_grid(counts, design, "linear", [0.0, 0.4, 1.0])
    assert [f.beta.beta for f in fits] == [0.0, 0.4, 1.0]
    failed = fits[1]
    assert failed.theta_hat is None
    assert not failed.converged
    assert "fit failed" in failed.message and "shifting-time" in failed.message
    assert np.all(np.isnan(failed.theta))
    assert fits[0].converged and fits[2].converged


def test_failed_fit_serializes_without_estimates():
    data = FitResult.failed(TuningParam(0.4), BaselineKind.LINEAR, 0.95, "fit failed: overflow").to_dict()
    assert data["baseline"] == "linear"
    assert data["converged"] is False
    assert data["loss"] is None
    assert [row["name"] for row in data["parameters"]] == ["gamma0", "gamma1", "a1"]
    assert all(row["estimate"] is None and row["stdError"] is None for row in data["parameters"])
    assert data["sigma"] is None


def test_seed_survives_an_underflowing_exposure():
    # a1 = 1 / (x2 - x1) = 1e4 makes exp(a1 * x2) underflow to zero.
    design = StepStressDesign(-0.5001, -0.5, 14.0, TIMES, 200)
    counts = GroupedCounts((10,) * 11 + (90,))
    p_hat = counts.array / counts.n_total
    seed = _exponential_seed(p_hat, counts.n_total, design, BaselineKind.LINEAR)
    assert seed.shape == (3,)
    assert np.all(np.isfinite(seed))
    fits = fit_grid(counts, design, "linear", [0.0, 0.5])
    assert [f.beta.beta for f in fits] == [0.0, 0.5]
    for f in fits:
        assert f.theta_hat is None or np.all(np.isfinite(f.theta))
        assert isinstance(f.to_dict()["converged"], bool)


def test_fit_is_invariant_to_scaling_the_counts():
    design = _design(200)
    counts = generate_counts(THETA, design, seed=13)
    fit = fit_mdpde(counts, design, "linear", 0.3)
    scaled = fit_mdpde(counts.scaled(5), _design(1000), "linear", 0.3)
    assert fit.converged and scaled.converged
    np.testing.assert_allclose(scaled.theta, fit.theta, rtol=1e-10)
    np.testing.assert_allclose(scaled.std_errors * math.sqrt(5), fit.std_errors, rtol=1e-8)


@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_converged_starts_reach_the_same_minimum(beta):
    design = _design(1000)
    counts = generate_counts(THETA, design, seed=17)
    fit = fit_mdpde(counts, design, "linear", beta)
    losses = [s.loss for s in fit.starts if s.converged]
    assert len(losses) >= 3
    assert max(losses) - min(losses) < 1e-6
    assert fit.loss == min(losses)


def _direct_likelihood_maximum(counts: GroupedCounts, design: StepStressDesign) -> np.ndarray:
    n = counts.n_total

    def negative_loglik(phi):
        try:
            return -log_likelihood(counts, ModelParams.from_theta("linear", np.exp(phi)), design) / n
        except (ValueError, ArithmeticError):
            return 1e10

    phi = np.log(THETA.theta)
    for _ in range(3):
        phi = minimize(
            negative_loglik,
            phi,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000, "maxfev": 20000},
        ).x
    return np.exp(phi)


def test_beta_zero_agrees_with_the_likelihood_maximum_on_many_datasets():
    design = _design(1000)
    for seed in range(20):
        counts = generate_counts(THETA, design, seed=seed)
        fit = fit_mdpde(counts, design, "linear", 0.0)
        assert fit.converged, (seed, fit.message)
        direct = _direct_likelihood_maximum(counts, design)
        np.testing.assert_allclose(fit.theta, direct, rtol=0, atol=1e-6, err_msg=f"seed {seed}")
