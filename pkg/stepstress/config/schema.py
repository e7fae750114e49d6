"""Configuration schema using Pydantic."""

from __future__ import annotations

from typing import Annotated

from pydantic import (
    AfterValidator,
    AliasChoices,
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)
from pydantic.alias_generators import to_camel
from pydantic_settings import BaseSettings, SettingsConfigDict

from stepstress.core.types import BaselineKind, ModelParams, StepStressDesign

DEFAULT_BETAS: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class Base(BaseModel):
    """Base model that accepts both camelCase and snake_case keys."""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True)


def _check_level(v: float) -> float:
    if not 0 < v < 1:
        raise ValueError(f"level must lie in (0, 1), got {v}")
    return v


Level = Annotated[float, AfterValidator(_check_level)]


class DesignConfig(Base):
    """Stress levels, stress-change time, inspection times and sample size."""

    x1: float
    x2: float
    tau: float
    inspection_times: list[float]
    n_units: int = Field(
        default=200,
        validation_alias=AliasChoices("nUnits", "n_units", "N"),
        serialization_alias="nUnits",
    )

    @model_validator(mode="after")
    def check_design(self) -> DesignConfig:
        self.to_design()
        return self

    def to_design(self, n_units: int | None = None) -> StepStressDesign:
        return StepStressDesign(
            x1=self.x1,
            x2=self.x2,
            tau=self.tau,
            inspection_times=tuple(self.inspection_times),
            n_units=self.n_units if n_units is None else n_units,
        )


class ThetaConfig(Base):
    """Model parameters on the original scale."""

    gamma: list[float]
    a1: float

    @field_validator("gamma")
    @classmethod
    def nonnegative_gamma(cls, v: list[float]) -> list[float]:
        if any(g < 0 for g in v) or not any(g > 0 for g in v):
            raise ValueError("gamma must be nonnegative with at least one positive entry")
        return v

    @field_validator("a1")
    @classmethod
    def positive_a1(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"a1 must be > 0, got {v}")
        return v

    def to_params(self, kind: BaselineKind) -> ModelParams:
        return ModelParams.from_theta(kind, [*self.gamma, self.a1])


class NocConfig(Base):
    """Normal operating conditions at which lifetime characteristics are reported."""

    x0: float
    t0: float = 1.0
    p: float = 0.5
    level: Level = 0.95
    quantiles: list[float] = Field(default_factory=list)

    @field_validator("t0")
    @classmethod
    def nonnegative_t0(cls, v: float) -> float:
        if v < 0:
            raise ValueError(f"t0 must be >= 0, got {v}")
        return v

    @field_validator("p")
    @classmethod
    def open_unit_p(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError(f"p must lie in (0, 1), got {v}")
        return v

    @field_validator("quantiles")
    @classmethod
    def open_unit_quantiles(cls, v: list[float]) -> list[float]:
        for q in v:
            if not 0 < q < 1:
                raise ValueError(f"quantile probabilities must lie in (0, 1), got {q}")
        return v


class ContaminationConfig(Base):
    """Cell whose conditional failure probability is inflated by (1 + epsilon)."""

    cell: int
    epsilons: list[float] = Field(default_factory=lambda: [0.0])

    @field_validator("epsilons")
    @classmethod
    def nonnegative_epsilons(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("epsilons must not be empty")
        if any(e < 0 for e in v):
            raise ValueError("epsilons must be >= 0")
        return v


class SimulationSettings(Base):
    """Monte Carlo controls."""

    replicates: int = 1000
    seed: int = 0
    workers: int | None = None  # None = one process per core

    @field_validator("replicates")
    @classmethod
    def positive_replicates(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"replicates must be >= 1, got {v}")
        return v

    @field_validator("seed")
    @classmethod
    def seed_fits_64_bits(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return v

    @field_validator("workers")
    @classmethod
    def positive_workers(cls, v: int | None) -> int | None:
        if v is not None and v < 1:
            raise ValueError(f"workers must be >= 1, got {v}")
        return v


class SolverOptions(Base):
    """Optimizer tolerances and reporting thresholds for MDPDE fits."""

    gtol: float = 1e-8
    step_tol: float = 1e-10
    max_iter: int = 500
    n_starts: int = 5
    zero_threshold: float = 1e-7
    level: Level = 0.95

    @field_validator("gtol", "step_tol", "zero_threshold")
    @classmethod
    def positive_tolerance(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"tolerances must be > 0, got {v}")
        return v

    @field_validator("max_iter", "n_starts")
    @classmethod
    def positive_count(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"iteration and start counts must be >= 1, got {v}")
        return v


class ExperimentConfig(Base):
    """A complete experiment: design, optional truth, NOC query, beta grid and simulation plan."""

    preset: str | None = None
    baseline: BaselineKind = BaselineKind.LINEAR
    design: DesignConfig
    theta: ThetaConfig | None = None
    noc: NocConfig | None = None
    betas: list[float] = Field(default_factory=lambda: list(DEFAULT_BETAS))
    contamination: ContaminationConfig | None = None
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    solver: SolverOptions = Field(default_factory=SolverOptions)

    @field_validator("betas")
    @classmethod
    def nonnegative_betas(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("betas must not be empty")
        if any(b < 0 for b in v):
            raise ValueError("betas must be >= 0")
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> ExperimentConfig:
        if self.theta is not None:
            expected = self.baseline.n_coefficients
            if len(self.theta.gamma) != expected:
                raise ValueError(
                    f"theta.gamma has {len(self.theta.gamma)} entries; "
                    f"a {self.baseline.value} baseline needs {expected}"
                )
        if self.contamination is not None:
            n_cells = len(self.design.inspection_times) + 1
            if not 1 <= self.contamination.cell <= n_cells:
                raise ValueError(f"contamination.cell must lie in 1..{n_cells}")
        return self

    def to_design(self, n_units: int | None = None) -> StepStressDesign:
        return self.design.to_design(n_units)

    def true_params(self) -> ModelParams:
        if self.theta is None:
            raise ValueError("this command needs a true theta in the config")
        return self.theta.to_params(self.baseline)

    def require_noc(self) -> NocConfig:
        if self.noc is None:
            raise ValueError("this command needs a noc block (x0, t0, p) in the config")
        return self.noc


class RuntimeSettings(BaseSettings):
    """Process-level settings read from the environment (STEPSTRESS_LOG only)."""

    model_config = SettingsConfigDict(env_prefix="STEPSTRESS_")

    log: str = "WARNING"

    @field_validator("log")
    @classmethod
    def known_level(cls, v: str) -> str:
        level = v.strip().upper()
        if level not in {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return level
