"""Seeded Monte Carlo study of MDPDE accuracy under cell contamination.

Replicate r draws from ``SeedSequence(master_seed, spawn_key=(r,))``. The
same stream is reused for every epsilon, and all betas are fitted to the same
sample, so comparisons across the grid use common random numbers. Replicates
are independent tasks whose results are aggregated in replicate order, which
makes the report identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from loguru import logger

from stepstress.characteristics.lifetime import (
    NocQuery,
    hazard_rate,
    mean_lifetime,
    quantile,
)
from stepstress.config.schema import ExperimentConfig, SolverOptions
from stepstress.core.errors import NumericalError
from stepstress.core.model import constant_stress_reliability
from stepstress.core.types import ModelParams, StepStressDesign
from stepstress.estimation.optimizer import fit_mdpde
from stepstress.simulation.generator import (
    ContaminationSpec,
    adjusted_residuals,
    conditional_probabilities,
    generate_counts,
)
from stepstress.utils.helpers import finite_or_none

FAILURE_FLAG_RATE = 0.05


@dataclass(frozen=True, slots=True)
class SimulationConfig:
    """Everything a Monte Carlo study needs; picklable so replicates can run in worker processes."""

    theta0: ModelParams
    design: StepStressDesign
    beta_grid: tuple[float, ...]
    query: NocQuery
    replicates: int = 1000
    master_seed: int = 0
    contamination_cell: int | None = None
    epsilons: tuple[float, ...] = (0.0,)
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not self.beta_grid or any(b < 0 for b in self.beta_grid):
            raise ValueError("beta grid must be non-empty and nonnegative")
        if not self.epsilons or any(e < 0 for e in self.epsilons):
            raise ValueError("epsilon grid must be non-empty and nonnegative")
        if self.contamination_cell is None and any(e > 0 for e in self.epsilons):
            raise ValueError("a positive epsilon needs a contamination cell")
        if self.contamination_cell is not None:
            ContaminationSpec(self.contamination_cell, 0.0).check_design(self.design)
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_experiment(
        cls,
        config: ExperimentConfig,
        *,
        betas: list[float] | None = None,
        seed: int | None = None,
        workers: int | None = None,
        replicates: int | None = None,
    ) -> SimulationConfig:
        noc = config.require_noc()
        cont = config.contamination
        return cls(
            theta0=config.true_params(),
            design=config.to_design(),
            beta_grid=tuple(betas if betas is not None else config.betas),
            query=NocQuery(noc.x0, noc.t0, noc.p, noc.level),
            replicates=replicates if replicates is not None else config.simulation.replicates,
            master_seed=seed if seed is not None else config.simulation.seed,
            contamination_cell=None if cont is None else cont.cell,
            epsilons=tuple(cont.epsilons) if cont is not None else (0.0,),
            solver=config.solver,
            workers=workers if workers is not None else config.simulation.workers,
        )

    def contamination(self, epsilon: float) -> ContaminationSpec | None:
        if self.contamination_cell is None or epsilon == 0:
            return None
        return ContaminationSpec(self.contamination_cell, epsilon)


def characteristic_targets(query: NocQuery) -> dict[str, Callable[[ModelParams], float]]:
    """Characteristics tracked per replicate: a quantile (the median by default), mean, hazard, reliability."""
    label = "median" if query.p == 0.5 else f"quantile_{query.p:g}"
    return {
        label: lambda th: quantile(th, query.p, query.x0),
        "mean": lambda th: mean_lifetime(th, query.x0),
        "hazard": lambda th: hazard_rate(th, query.t0, query.x0),
        "reliability": lambda th: constant_stress_reliability(query.t0, th, query.x0),
    }


@dataclass(slots=True)
class _FitOutcome:
    ok: bool
    theta: np.ndarray | None = None
    covered: list[bool | None] = field(default_factory=list)
    characteristics: dict[str, float] = field(default_factory=dict)
    error: str = ""


@dataclass(slots=True)
class _ReplicateResult:
    index: int
    fits: list[list[_FitOutcome]]  # [epsilon][beta]
    residuals: list[np.ndarray]  # per epsilon, at theta0


def _evaluate_characteristics(config: SimulationConfig, theta: ModelParams) -> dict[str, float]:
    values = {}
    for name, fn in characteristic_targets(config.query).items():
        try:
            values[name] = float(fn(theta))
        except (NumericalError, ValueError):
            values[name] = math.nan
    return values


def _run_replicate(task: tuple[SimulationConfig, int]) -> _ReplicateResult:
    config, index = task
    truth = config.theta0.theta
    fits: list[list[_FitOutcome]] = []
    residuals: list[np.ndarray] = []
    for epsilon in config.epsilons:
        rng = np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(index,)))
        counts = generate_counts(config.theta0, config.design, config.contamination(epsilon), rng)
        residuals.append(adjusted_residuals(counts, config.theta0, config.design))
        row = []
        for beta in config.beta_grid:
            try:
                fit = fit_mdpde(counts, config.design, config.theta0.kind, beta, config.solver)
            except (NumericalError, ValueError, ArithmeticError) as e:
                row.append(_FitOutcome(ok=False, error=str(e)))
                continue
            if not fit.converged:
                row.append(_FitOutcome(ok=False, error=fit.message))
                continue
            covered = [
                None if not all(map(math.isfinite, ci)) else bool(ci[0] <= t <= ci[1])
                for ci, t in zip(fit.ci, truth)
            ]
            row.append(
                _FitOutcome(
                    ok=True,
                    theta=fit.theta_hat.theta,
                    covered=covered,
                    characteristics=_evaluate_characteristics(config, fit.theta_hat),
                )
            )
        fits.append(row)
    return _ReplicateResult(index, fits, residuals)


@dataclass(slots=True)
class CellSummary:
    """Aggregates over replicates for one (beta, epsilon) pair."""

    beta: float
    epsilon: float
    rmse: dict[str, float]
    bias: dict[str, float]
    mean_estimates: dict[str, float]
    coverage: dict[str, float]
    n_converged: int
    n_failed: int

    def to_dict(self) -> dict[str, Any]:
        def clean(d: dict[str, float]) -> dict[str, float | None]:
            return {k: finite_or_none(v) for k, v in d.items()}

        return {
            "beta": self.beta,
            "epsilon": self.epsilon,
            "rmse": clean(self.rmse),
            "bias": clean(self.bias),
            "meanEstimates": clean(self.mean_estimates),
            "coverage": clean(self.coverage),
            "nConverged": self.n_converged,
            "nFailed": self.n_failed,
        }


@dataclass(slots=True)
class MonteCarloReport:
    """RMSE, bias, mean estimates and coverage per (beta, epsilon), plus mean residuals per epsilon."""

    parameter_names: tuple[str, ...]
    targets: tuple[str, ...]
    truth: dict[str, float]
    replicates: int
    master_seed: int
    n_units: int
    contamination_cell: int | None
    cells: list[CellSummary]
    mean_residuals: dict[float, list[float]]
    clamped: dict[float, bool]

    @property
    def failure_rate(self) -> float:
        if not self.cells:
            return 0.0
        return max(c.n_failed for c in self.cells) / self.replicates

    @property
    def flagged(self) -> bool:
        return self.failure_rate > FAILURE_FLAG_RATE

    def cell(self, beta: float, epsilon: float) -> CellSummary:
        for c in self.cells:
            if c.beta == beta and c.epsilon == epsilon:
                return c
        raise KeyError(f"no results for beta={beta}, epsilon={epsilon}")

    def rmse_rows(self) -> list[tuple[float, float, str, float | None]]:
        """Long-format rows (beta, epsilon, target, rmse) for plotting."""
        return [
            (c.beta, c.epsilon, target, finite_or_none(c.rmse[target]))
            for c in self.cells
            for target in (*self.parameter_names, *self.targets)
        ]

    def residual_rows(self) -> list[tuple[float, int, float | None]]:
        """(epsilon, cell, mean adjusted residual) rows."""
        return [
            (eps, j + 1, finite_or_none(r))
            for eps, values in self.mean_residuals.items()
            for j, r in enumerate(values)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "parameters": list(self.parameter_names),
            "targets": list(self.targets),
            "truth": {k: finite_or_none(v) for k, v in self.truth.items()},
            "replicates": self.replicates,
            "masterSeed": self.master_seed,
            "nUnits": self.n_units,
            "contaminationCell": self.contamination_cell,
            "failureRate": self.failure_rate,
            "flagged": self.flagged,
            "clamped": {f"{eps:g}": v for eps, v in self.clamped.items()},
            "cells": [c.to_dict() for c in self.cells],
            "meanResiduals": {
                f"{eps:g}": [finite_or_none(r) for r in values]
                for eps, values in self.mean_residuals.items()
            },
        }


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values**2))) if values.size else math.nan


def _aggregate(config: SimulationConfig, results: list[_ReplicateResult]) -> MonteCarloReport:
    names = config.theta0.names
    truth_theta = config.theta0.theta
    truth_chars = _evaluate_characteristics(config, config.theta0)
    targets = tuple(truth_chars)
    cells = []
    for i, epsilon in enumerate(config.epsilons):
        for j, beta in enumerate(config.beta_grid):
            outcomes = [r.fits[i][j] for r in results]
            ok = [o for o in outcomes if o.ok]
            estimates = np.array([o.theta for o in ok]).reshape(len(ok), len(names))
            errors = estimates - truth_theta
            rmse = {n: _rms(errors[:, k]) for k, n in enumerate(names)}
            bias = {n: float(errors[:, k].mean()) if ok else math.nan for k, n in enumerate(names)}
            mean_est = {n: float(estimates[:, k].mean()) if ok else math.nan for k, n in enumerate(names)}
            coverage = {}
            for k, n in enumerate(names):
                flags = [o.covered[k] for o in ok if o.covered[k] is not None]
                coverage[n] = float(np.mean(flags)) if flags else math.nan
            for target in targets:
                vals = np.array([o.characteristics[target] for o in ok], dtype=float)
                vals = vals[np.isfinite(vals)]
                rmse[target] = _rms(vals - truth_chars[target])
            n_failed = len(outcomes) - len(ok)
            if n_failed:
                logger.warning(
                    "beta={} epsilon={}: {} of {} replicates failed", beta, epsilon, n_failed, len(outcomes)
                )
            cells.append(CellSummary(beta, epsilon, rmse, bias, mean_est, coverage, len(ok), n_failed))

    mean_residuals = {
        eps: np.mean([r.residuals[i] for r in results], axis=0).tolist()
        for i, eps in enumerate(config.epsilons)
    }
    clamped = {
        eps: conditional_probabilities(config.theta0, config.design, config.contamination(eps))[1]
        for eps in config.epsilons
    }
    truth = {**dict(zip(names, truth_theta.tolist())), **truth_chars}
    report = MonteCarloReport(
        parameter_names=names,
        targets=targets,
        truth=truth,
        replicates=config.replicates,
        master_seed=config.master_seed,
        n_units=config.design.n_units,
        contamination_cell=config.contamination_cell,
        cells=cells,
        mean_residuals=mean_residuals,
        clamped=clamped,
    )
    if report.flagged:
        logger.warning("replicate failure rate {:.1%} exceeds {:.0%}", report.failure_rate, FAILURE_FLAG_RATE)
    return report


def rmse_study(config: SimulationConfig) -> MonteCarloReport:
    """Run every replicate, fit every beta on every epsilon, and aggregate."""
    tasks = [(config, r) for r in range(config.replicates)]
    workers = config.workers or os.cpu_count() or 1
    workers = min(workers, config.replicates)
    logger.info(
        "Monte Carlo: {} replicates x {} epsilons x {} betas on {} worker(s)",
        config.replicates,
        len(config.epsilons),
        len(config.beta_grid),
        workers,
    )
    if workers == 1:
        results = [_run_replicate(t) for t in tasks]
    else:
        chunk = max(1, config.replicates // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, tasks, chunksize=chunk))
    return _aggregate(config, results)
