"""Domain types for interval-monitored simple step-stress experiments.

All types are immutable after construction and validate their invariants in
``__post_init__``; invalid input raises ``ValueError``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

_TIME_RTOL = 1e-12
PROB_ATOL = 1e-12


class BaselineKind(str, Enum):
    """Polynomial degree of the baseline hazard."""

    LINEAR = "linear"
    QUADRATIC = "quadratic"

    @property
    def n_coefficients(self) -> int:
        return 2 if self is BaselineKind.LINEAR else 3

    @property
    def n_params(self) -> int:
        return self.n_coefficients + 1


def parameter_names(kind: BaselineKind | str) -> tuple[str, ...]:
    """Names of the entries of the parameter vector, in order."""
    kind = BaselineKind(kind)
    return tuple(f"gamma{i}" for i in range(kind.n_coefficients)) + ("a1",)


@dataclass(frozen=True, slots=True)
class BaselineHazard:
    """Polynomial baseline hazard h0(t) = sum_i gamma_i t^i with nonnegative coefficients."""

    kind: BaselineKind
    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        kind = BaselineKind(self.kind)
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) != kind.n_coefficients:
            raise ValueError(
                f"{kind.value} baseline needs {kind.n_coefficients} coefficients, got {len(coeffs)}"
            )
        if any(not math.isfinite(c) or c < 0 for c in coeffs):
            raise ValueError(f"baseline coefficients must be finite and >= 0, got {coeffs}")
        if not any(c > 0 for c in coeffs):
            raise ValueError("at least one baseline coefficient must be strictly positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def linear(cls, gamma0: float, gamma1: float) -> BaselineHazard:
        return cls(BaselineKind.LINEAR, (gamma0, gamma1))

    @classmethod
    def quadratic(cls, gamma0: float, gamma1: float, gamma2: float) -> BaselineHazard:
        return cls(BaselineKind.QUADRATIC, (gamma0, gamma1, gamma2))

    def rate(self, t):
        """h0(t)."""
        t = np.asarray(t, dtype=float)
        return sum(c * t**i for i, c in enumerate(self.coefficients))

    def integral(self, t):
        """Cumulative baseline hazard sum_i gamma_i t^(i+1)/(i+1)."""
        t = np.asarray(t, dtype=float)
        return sum(c * t ** (i + 1) / (i + 1) for i, c in enumerate(self.coefficients))

    def integral_basis(self, t) -> np.ndarray:
        """Partial derivatives of ``integral`` w.r.t. each coefficient, stacked on the last axis."""
        t = np.asarray(t, dtype=float)
        return np.stack([t ** (i + 1) / (i + 1) for i in range(len(self.coefficients))], axis=-1)

    def rate_basis(self, t) -> np.ndarray:
        """Partial derivatives of ``rate`` w.r.t. each coefficient, stacked on the last axis."""
        t = np.asarray(t, dtype=float)
        return np.stack([t**i * np.ones_like(t) for i in range(len(self.coefficients))], axis=-1)


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Full parameter vector: baseline coefficients plus the log-linear stress coefficient a1."""

    baseline: BaselineHazard
    a1: float

    def __post_init__(self) -> None:
        a1 = float(self.a1)
        if not math.isfinite(a1) or a1 <= 0:
            raise ValueError(f"a1 must be finite and > 0, got {self.a1}")
        object.__setattr__(self, "a1", a1)

    @property
    def kind(self) -> BaselineKind:
        return self.baseline.kind

    @property
    def theta(self) -> np.ndarray:
        return np.array([*self.baseline.coefficients, self.a1], dtype=float)

    @property
    def names(self) -> tuple[str, ...]:
        return parameter_names(self.kind)

    @classmethod
    def from_theta(cls, kind: BaselineKind | str, theta: Sequence[float]) -> ModelParams:
        kind = BaselineKind(kind)
        values = [float(v) for v in theta]
        if len(values) != kind.n_params:
            raise ValueError(f"{kind.value} model has {kind.n_params} parameters, got {len(values)}")
        return cls(BaselineHazard(kind, tuple(values[:-1])), values[-1])

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.theta.tolist()))


@dataclass(frozen=True, slots=True)
class StepStressDesign:
    """Simple step-stress plan with interval inspection.

    ``inspection_times`` are t_1 < ... < t_L; the stress changes from x1 to x2
    at ``tau`` = t_k, and t_L is the termination time.
    """

    x1: float
    x2: float
    tau: float
    inspection_times: tuple[float, ...]
    n_units: int

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.inspection_times)
        object.__setattr__(self, "inspection_times", times)
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "tau", float(self.tau))

        if len(times) < 2:
            raise ValueError("at least two inspection times are required")
        if any(not math.isfinite(t) or t <= 0 for t in times):
            raise ValueError("inspection times must be finite and > 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("inspection times must be strictly increasing")
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError("stress levels must be finite")
        if not self.x1 < self.x2:
            raise ValueError(f"stress levels must satisfy x1 < x2, got x1={self.x1}, x2={self.x2}")
        matches = [i for i, t in enumerate(times) if math.isclose(t, self.tau, rel_tol=_TIME_RTOL)]
        if not matches:
            raise ValueError(f"tau={self.tau} must be one of the inspection times")
        if matches[0] == len(times) - 1:
            raise ValueError("tau must precede the termination time t_L")
        object.__setattr__(self, "tau", times[matches[0]])
        if isinstance(self.n_units, bool) or int(self.n_units) != self.n_units or self.n_units < 1:
            raise ValueError(f"n_units must be a positive integer, got {self.n_units}")
        object.__setattr__(self, "n_units", int(self.n_units))

    @property
    def n_intervals(self) -> int:
        """L, the number of inspection intervals."""
        return len(self.inspection_times)

    @property
    def n_cells(self) -> int:
        return self.n_intervals + 1

    @property
    def k(self) -> int:
        """1-based index with t_k = tau."""
        return self.inspection_times.index(self.tau) + 1

    @property
    def termination_time(self) -> float:
        return self.inspection_times[-1]

    @property
    def grid(self) -> np.ndarray:
        """t_0 = 0 followed by the inspection times."""
        return np.array((0.0, *self.inspection_times))

    def interval_stress(self, cell: int) -> float:
        """Stress in force during the 1-based cell (the survivor cell reports x2)."""
        return self.x1 if cell <= self.k else self.x2


@dataclass(frozen=True, slots=True)
class GroupedCounts:
    """Failure counts n_1..n_L per interval followed by the survivors n_{L+1}."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        values = []
        for j, n in enumerate(self.counts, start=1):
            if isinstance(n, bool) or int(n) != n or n < 0:
                raise ValueError(f"cell {j}: counts must be nonnegative integers, got {n!r}")
            values.append(int(n))
        if len(values) < 2:
            raise ValueError("counts need at least one interval plus the survivor cell")
        object.__setattr__(self, "counts", tuple(values))

    @property
    def n_total(self) -> int:
        return sum(self.counts)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)

    def check_design(self, design: StepStressDesign) -> None:
        if len(self.counts) != design.n_cells:
            raise ValueError(
                f"counts have {len(self.counts)} cells but the design has L+1={design.n_cells}"
            )

    def scaled(self, factor: int) -> GroupedCounts:
        return GroupedCounts(tuple(n * factor for n in self.counts))


@dataclass(frozen=True, slots=True)
class CellProbabilities:
    """Multinomial cell probabilities pi_1..pi_{L+1}, each in (0, 1), summing to one."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ValueError(f"cell probabilities must be a vector of length >= 2, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0) or np.any(values >= 1):
            bad = [j + 1 for j, v in enumerate(values) if not 0 < v < 1]
            raise ValueError(f"cell probabilities must lie in (0, 1); offending cells {bad}")
        total = float(values.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"cell probabilities must sum to 1, got {total!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)
