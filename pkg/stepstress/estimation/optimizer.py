"""Minimum density power divergence fitting.

The loss is minimized over phi = log(theta), which keeps every baseline
coefficient and a1 positive. Each start runs BFGS with the analytic gradient;
a start that stalls is polished with expected-Hessian Newton steps and, if it
still has not converged, restarted from a Nelder-Mead solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from loguru import logger
from scipy.optimize import minimize

from stepstress.config.schema import SolverOptions
from stepstress.core.errors import NumericalError
from stepstress.core.model import cell_prob_jacobian, unchecked_cell_probabilities
from stepstress.core.types import (
    BaselineHazard,
    BaselineKind,
    GroupedCounts,
    ModelParams,
    StepStressDesign,
    parameter_names,
)
from stepstress.estimation.asymptotics import (
    AsymptoticCovariance,
    asymptotic_covariance,
    sandwich_matrices,
    wald_ci,
)
from stepstress.estimation.divergence import (
    TuningParam,
    as_tuning,
    dpd_loss,
    empirical_probs,
    weighted_residuals,
)
from stepstress.utils.helpers import finite_or_none

_PENALTY = 1e10
_PI_FLOOR = 1e-150
_POLISH_STEPS = 50


@dataclass(slots=True)
class StartSummary:
    """Outcome of one multistart run."""

    index: int
    loss: float
    converged: bool
    iterations: int
    grad_norm: float
    theta: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "loss": finite_or_none(self.loss),
            "converged": self.converged,
            "iterations": self.iterations,
            "gradNorm": finite_or_none(self.grad_norm),
            "theta": [finite_or_none(v) for v in self.theta],
        }


@dataclass(slots=True)
class FitResult:
    """MDPDE for one tuning parameter with its sandwich standard errors and Wald intervals.

    ``theta_hat`` is None when the fit produced no estimate at all; ``message``
    then says why.
    """

    beta: TuningParam
    kind: BaselineKind
    theta_hat: ModelParams | None
    loss: float
    score_norm: float
    covariance: AsymptoticCovariance | None
    std_errors: np.ndarray
    ci: list[tuple[float, float]]
    converged: bool
    iterations: int
    zero_flags: tuple[bool, ...]
    level: float
    message: str = ""
    starts: list[StartSummary] = field(default_factory=list)

    @classmethod
    def failed(cls, beta: TuningParam, kind: BaselineKind, level: float, message: str) -> FitResult:
        n = kind.n_params
        return cls(
            beta=beta,
            kind=kind,
            theta_hat=None,
            loss=math.nan,
            score_norm=math.nan,
            covariance=None,
            std_errors=np.full(n, np.nan),
            ci=[(math.nan, math.nan)] * n,
            converged=False,
            iterations=0,
            zero_flags=(False,) * n,
            level=level,
            message=message,
        )

    @property
    def names(self) -> tuple[str, ...]:
        return parameter_names(self.kind)

    @property
    def theta(self) -> np.ndarray:
        if self.theta_hat is None:
            return np.full(self.kind.n_params, np.nan)
        return self.theta_hat.theta

    @property
    def sigma(self) -> np.ndarray | None:
        return None if self.covariance is None else self.covariance.sigma

    @property
    def estimates(self) -> dict[str, float]:
        return dict(zip(self.names, self.theta.tolist()))

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for i, (name, value) in enumerate(self.estimates.items()):
            lo, hi = self.ci[i]
            rows.append(
                {
                    "name": name,
                    "estimate": finite_or_none(value),
                    "stdError": finite_or_none(self.std_errors[i]),
                    "ciLower": finite_or_none(lo),
                    "ciUpper": finite_or_none(hi),
                    "zero": self.zero_flags[i],
                }
            )
        return {
            "beta": self.beta.beta,
            "baseline": self.kind.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "loss": finite_or_none(self.loss),
            "scoreNorm": finite_or_none(self.score_norm),
            "level": self.level,
            "message": self.message,
            "parameters": rows,
            "sigma": None if self.sigma is None else self.sigma.tolist(),
            "nUnits": None if self.covariance is None else self.covariance.n_units,
            "starts": [s.to_dict() for s in self.starts],
        }


class _Objective:
    """DPD loss and its gradient as functions of phi = log(theta)."""

    def __init__(
        self, p_hat: np.ndarray, design: StepStressDesign, kind: BaselineKind, beta: float
    ) -> None:
        self.p_hat = p_hat
        self.design = design
        self.kind = kind
        self.beta = beta

    def params(self, phi: np.ndarray) -> ModelParams:
        return ModelParams.from_theta(self.kind, np.exp(phi))

    def value(self, phi: np.ndarray) -> float:
        with np.errstate(all="ignore"):
            try:
                pi = unchecked_cell_probabilities(self.params(phi), self.design)
            except (ValueError, NumericalError):
                return _PENALTY
            if not np.all(np.isfinite(pi)):
                return _PENALTY
            loss = dpd_loss(self.p_hat, np.maximum(pi, _PI_FLOOR), self.beta)
        return loss if math.isfinite(loss) else _PENALTY

    def value_and_grad(self, phi: np.ndarray) -> tuple[float, np.ndarray]:
        failed = (_PENALTY, np.zeros_like(phi))
        with np.errstate(all="ignore"):
            try:
                params = self.params(phi)
                pi = unchecked_cell_probabilities(params, self.design)
                W = cell_prob_jacobian(params, self.design)
            except (ValueError, NumericalError):
                return failed
            if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(W))):
                return failed
            pi = np.maximum(pi, _PI_FLOOR)
            loss = dpd_loss(self.p_hat, pi, self.beta)
            score = W.T @ weighted_residuals(self.p_hat, pi, self.beta)
            grad = -(self.beta + 1.0) * score * params.theta
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            return failed
        return loss, grad

    def expected_hessian(self, phi: np.ndarray) -> np.ndarray:
        """(beta + 1) J in phi coordinates; the Hessian at the minimum up to O(p_hat - pi)."""
        params = self.params(phi)
        J, _ = sandwich_matrices(params, self.design, self.beta)
        theta = params.theta
        return (self.beta + 1.0) * J * np.outer(theta, theta)


@dataclass(slots=True)
class _Run:
    phi: np.ndarray
    loss: float
    grad_norm: float
    step_norm: float
    iterations: int

    def converged(self, opts: SolverOptions) -> bool:
        if self.loss >= _PENALTY:
            return False
        return self.grad_norm < opts.gtol or self.step_norm < opts.step_tol


def _bfgs(obj: _Objective, phi0: np.ndarray, opts: SolverOptions) -> _Run:
    trail = [np.array(phi0, dtype=float)]
    res = minimize(
        obj.value_and_grad,
        trail[0],
        jac=True,
        method="BFGS",
        callback=lambda xk: trail.append(np.array(xk, dtype=float)),
        options={"gtol": opts.gtol, "maxiter": opts.max_iter},
    )
    step = float(np.linalg.norm(trail[-1] - trail[-2])) if len(trail) > 1 else math.inf
    loss, grad = obj.value_and_grad(res.x)
    return _Run(np.asarray(res.x, dtype=float), loss, float(np.linalg.norm(grad)), step, int(res.nit))


def _polish(obj: _Objective, run: _Run, opts: SolverOptions) -> _Run:
    """Damped Newton steps with the expected Hessian, halving until the loss does not rise."""
    phi = run.phi
    loss, grad = obj.value_and_grad(phi)
    step_norm = run.step_norm
    steps = 0
    for _ in range(_POLISH_STEPS):
        if loss >= _PENALTY or np.linalg.norm(grad) < opts.gtol:
            break
        try:
            hessian = obj.expected_hessian(phi)
            delta = np.linalg.lstsq(hessian, -grad, rcond=None)[0]
        except (ValueError, NumericalError, np.linalg.LinAlgError):
            break
        if not np.all(np.isfinite(delta)):
            break
        size, accepted = 1.0, False
        while size > 1e-5:
            cand = phi + size * delta
            c_loss, c_grad = obj.value_and_grad(cand)
            tolerance = 1e-14 * max(1.0, abs(loss))
            if c_loss < loss or (
                c_loss <= loss + tolerance and np.linalg.norm(c_grad) < np.linalg.norm(grad)
            ):
                accepted = True
                break
            size *= 0.5
        if not accepted:
            break
        steps += 1
        step_norm = float(np.linalg.norm(cand - phi))
        phi, loss, grad = cand, c_loss, c_grad
        if step_norm < opts.step_tol:
            break
    return _Run(phi, loss, float(np.linalg.norm(grad)), step_norm, run.iterations + steps)


def _run_start(obj: _Objective, phi0: np.ndarray, opts: SolverOptions) -> _Run:
    run = _bfgs(obj, phi0, opts)
    if run.converged(opts):
        return run
    run = _polish(obj, run, opts)
    if run.converged(opts):
        return run
    logger.debug("BFGS stalled (|grad|={:.3g}); falling back to Nelder-Mead", run.grad_norm)
    nm = minimize(
        obj.value,
        run.phi,
        method="Nelder-Mead",
        options={"xatol": opts.step_tol, "fatol": 1e-15, "maxiter": 10 * opts.max_iter},
    )
    retry = _polish(obj, _bfgs(obj, nm.x, opts), opts)
    retry.iterations += run.iterations + int(nm.nit)
    if retry.converged(opts) or retry.loss < run.loss:
        return retry
    run.iterations = retry.iterations
    return run


def _exponential_seed(
    p_hat: np.ndarray, n_total: int, design: StepStressDesign, kind: BaselineKind
) -> np.ndarray:
    """Constant-baseline maximum likelihood fit, spread over the polynomial terms, in log coordinates.

    The exposure exp(a1 x2) (t_L + s) is kept as a logarithm; it underflows once
    a1 x2 is far below -700.
    """
    a1 = 1.0 / (design.x2 - design.x1)
    s0 = design.tau * (math.exp(a1 * (design.x1 - design.x2)) - 1.0)
    survivors = min(max(p_hat[-1], 0.5 / n_total), 1.0 - 0.5 / n_total)
    log_exposure = a1 * design.x2 + math.log(design.termination_time + s0)
    log_gamma0 = math.log(-math.log(survivors)) - log_exposure

    def kl(phi2: np.ndarray) -> float:
        with np.errstate(all="ignore"):
            try:
                params = ModelParams(BaselineHazard.linear(math.exp(phi2[0]), 0.0), math.exp(phi2[1]))
                pi = unchecked_cell_probabilities(params, design)
            except (ValueError, NumericalError, OverflowError):
                return _PENALTY
            if not np.all(np.isfinite(pi)):
                return _PENALTY
            return dpd_loss(p_hat, np.maximum(pi, _PI_FLOOR), 0.0)

    start = np.array([log_gamma0, math.log(a1)])
    res = minimize(kl, start, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 400})
    phi = res.x if res.fun < kl(start) else start
    log_t_end = math.log(design.termination_time)
    log_gammas = [phi[0] - i * log_t_end for i in range(kind.n_coefficients)]
    return np.array([*log_gammas, phi[1]])


def _start_offsets(kind: BaselineKind, n_starts: int) -> list[np.ndarray]:
    m = kind.n_coefficients
    base = []
    for gamma_shift, higher_shift, a1_shift in (
        (0.0, 0.0, 0.0),
        (0.5, 0.0, 0.0),
        (-0.5, 0.0, 0.0),
        (0.0, 1.0, -0.25),
        (0.0, -1.0, 0.25),
    ):
        offset = np.full(m + 1, gamma_shift)
        offset[1:m] += higher_shift
        offset[m] = a1_shift
        base.append(offset)
    return [base[i % len(base)] * (1 + i // len(base)) for i in range(n_starts)]


def fit_mdpde(
    counts: GroupedCounts,
    d: StepStressDesign,
    kind: BaselineKind | str,
    beta: TuningParam | float,
    opts: SolverOptions | None = None,
    *,
    plug_in: ModelParams | None = None,
) -> FitResult:
    """Minimum DPD estimate of theta from grouped step-stress counts.

    Args:
        counts: Observed cell counts; their total must equal ``d.n_units``.
        d: Test design.
        kind: Baseline kind to fit.
        beta: Tuning parameter; 0 gives the maximum likelihood estimator.
        opts: Solver tolerances, start count, zero threshold and CI level.
        plug_in: Evaluate the covariance at these parameters instead of the estimate.

    Returns:
        The fit. Non-convergence is reported through ``converged`` and ``message``,
        never raised.
    """
    kind = BaselineKind(kind)
    tuning = as_tuning(beta)
    opts = opts or SolverOptions()
    counts.check_design(d)
    if counts.n_total != d.n_units:
        raise ValueError(f"counts total {counts.n_total} differs from design n_units {d.n_units}")
    p_hat = empirical_probs(counts).p_hat
    obj = _Objective(p_hat, d, kind, tuning.beta)

    seed = _exponential_seed(p_hat, counts.n_total, d, kind)
    runs: list[_Run] = []
    starts: list[StartSummary] = []
    for i, offset in enumerate(_start_offsets(kind, opts.n_starts)):
        run = _run_start(obj, seed + offset, opts)
        runs.append(run)
        starts.append(
            StartSummary(
                i, run.loss, run.converged(opts), run.iterations, run.grad_norm, np.exp(run.phi).tolist()
            )
        )
    converged_runs = [r for r in runs if r.converged(opts)]
    best = min(converged_runs or runs, key=lambda r: r.loss)
    converged = bool(converged_runs)
    iterations = sum(r.iterations for r in runs)
    logger.debug(
        "beta={} multistart losses={} converged={}",
        tuning.beta,
        [round(s.loss, 12) for s in starts],
        [s.converged for s in starts],
    )

    theta = np.exp(best.phi)
    if not (np.all(np.isfinite(theta)) and np.all(theta > 0)):
        message = f"no finite positive estimate; best loss={best.loss:.3g}, |grad|={best.grad_norm:.2e}"
        logger.warning("beta={}: {}", tuning.beta, message)
        failed = FitResult.failed(tuning, kind, opts.level, message)
        failed.iterations, failed.starts = iterations, starts
        return failed
    m = kind.n_coefficients
    zero_flags = [False] * len(theta)
    small = [i for i in range(m) if theta[i] < opts.zero_threshold]
    if len(small) < m:
        for i in small:
            theta[i] = 0.0
            zero_flags[i] = True
    theta_hat = ModelParams.from_theta(kind, theta)

    if converged:
        message = f"converged: |grad|={best.grad_norm:.2e}, last step={best.step_norm:.2e}"
    else:
        message = f"no start converged within {opts.max_iter} iterations; best |grad|={best.grad_norm:.2e}"
        logger.warning("beta={}: {}", tuning.beta, message)

    covariance = None
    try:
        covariance = asymptotic_covariance(plug_in or theta_hat, d, tuning, counts.n_total)
        std_errors = covariance.std_errors
    except (NumericalError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning("beta={}: covariance unavailable: {}", tuning.beta, e)
        message = f"{message}; covariance unavailable: {e}"
        std_errors = np.full(len(theta), np.nan)
    ci = [
        wald_ci(float(theta[i]), float(std_errors[i]), opts.level, lower_bound=0.0)
        if math.isfinite(std_errors[i])
        else (math.nan, math.nan)
        for i in range(len(theta))
    ]
    return FitResult(
        beta=tuning,
        kind=kind,
        theta_hat=theta_hat,
        loss=best.loss,
        score_norm=best.grad_norm,
        covariance=covariance,
        std_errors=std_errors,
        ci=ci,
        converged=converged,
        iterations=iterations,
        zero_flags=tuple(zero_flags),
        level=opts.level,
        message=message,
        starts=starts,
    )


def fit_grid(
    counts: GroupedCounts,
    d: StepStressDesign,
    kind: BaselineKind | str,
    betas: Sequence[float],
    opts: SolverOptions | None = None,
    *,
    plug_in: ModelParams | None = None,
) -> list[FitResult]:
    """Fit every beta in turn; a failing beta is reported, not fatal to the rest."""
    kind = BaselineKind(kind)
    opts = opts or SolverOptions()
    counts.check_design(d)
    if counts.n_total != d.n_units:
        raise ValueError(f"counts total {counts.n_total} differs from design n_units {d.n_units}")
    tunings = [as_tuning(b) for b in betas]
    results: list[FitResult] = []
    for tuning in tunings:
        try:
            results.append(fit_mdpde(counts, d, kind, tuning, opts, plug_in=plug_in))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning("beta={}: fit failed: {}", tuning.beta, e)
            results.append(FitResult.failed(tuning, kind, opts.level, f"fit failed: {e}"))
    return results
