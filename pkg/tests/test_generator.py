"""Tests for data generation and adjusted residuals."""

from __future__ import annotations

import math

import numpy as np
import pytest

from stepstress.core.model import cell_probabilities
from stepstress.core.types import BaselineHazard, GroupedCounts, ModelParams, StepStressDesign
from stepstress.simulation.generator import (
    ContaminationSpec,
    adjusted_residuals,
    conditional_probabilities,
    expected_counts,
    generate_counts,
)

THETA = ModelParams(BaselineHazard.linear(math.exp(-4.0), math.exp(-5.3)), 0.5)
TIMES = tuple(float(t) for t in range(2, 23, 2))


def _design(n_units: int = 200) -> StepStressDesign:
    return StepStressDesign(0.5, 2.5, 14.0, TIMES, n_units)


def test_contamination_spec_validation():
    with pytest.raises(ValueError, match="epsilon"):
        ContaminationSpec(3, -0.1)
    with pytest.raises(ValueError, match="cell_index"):
        ContaminationSpec(0, 0.5)
    with pytest.raises(ValueError, match="outside"):
        ContaminationSpec(13, 0.5).check_design(_design())


def test_counts_sum_to_n_and_are_deterministic():
    design = _design()
    first = generate_counts(THETA, design, seed=42)
    second = generate_counts(THETA, design, seed=42)
    assert first == second
    assert first.n_total == 200
    assert len(first.counts) == design.n_cells
    assert generate_counts(THETA, design, seed=43) != first


def test_generator_accepts_a_numpy_generator():
    design = _design()
    a = generate_counts(THETA, design, seed=np.random.default_rng(5))
    b = generate_counts(THETA, design, seed=np.random.default_rng(5))
    assert a == b


def test_sequential_probabilities_reproduce_cell_masses():
    design = _design()
    q, clamped = conditional_probabilities(THETA, design)
    assert not clamped
    survivors = np.concatenate(([1.0], np.cumprod(1.0 - q)))
    pi = cell_probabilities(THETA, design).values
    np.testing.assert_allclose(q * survivors[:-1], pi[:-1], rtol=1e-12)
    assert survivors[-1] == pytest.approx(pi[-1], rel=1e-10)


def test_contamination_inflates_one_conditional_probability():
    design = _design()
    clean, _ = conditional_probabilities(THETA, design)
    dirty, clamped = conditional_probabilities(THETA, design, ContaminationSpec(10, 0.5))
    assert not clamped
    assert dirty[9] == pytest.approx(1.5 * clean[9])
    np.testing.assert_array_equal(np.delete(dirty, 9), np.delete(clean, 9))


def test_survivor_cell_contamination_lowers_the_last_failure_probability():
    design = _design()
    clean, _ = conditional_probabilities(THETA, design)
    dirty, _ = conditional_probabilities(THETA, design, ContaminationSpec(12, 0.5))
    assert 1.0 - dirty[-1] == pytest.approx(1.5 * (1.0 - clean[-1]))


def test_clamping_is_reported():
    design = _design()
    q, clamped = conditional_probabilities(THETA, design, ContaminationSpec(1, 1e6))
    assert clamped
    assert q[0] == 1.0
    counts = generate_counts(THETA, design, ContaminationSpec(1, 1e6), seed=0)
    assert counts.counts[0] == 200
    assert sum(counts.counts[1:]) == 0


def test_large_sample_frequencies_match_cell_probabilities():
    n = 1_000_000
    design = _design(n)
    counts = generate_counts(THETA, design, seed=2024)
    pi = cell_probabilities(THETA, design).values
    se = np.sqrt(pi * (1 - pi) / n)
    assert np.all(np.abs(counts.array / n - pi) < 4.5 * se)
    np.testing.assert_allclose(expected_counts(THETA, design), n * pi)


def test_doubling_a_cell_doubles_its_expected_frequency():
    n = 1_000_000
    design = _design(n)
    counts = generate_counts(THETA, design, ContaminationSpec(10, 1.0), seed=99)
    pi10 = cell_probabilities(THETA, design).values[9]
    se = math.sqrt(2 * pi10 * (1 - 2 * pi10) / n)
    assert abs(counts.counts[9] / n - 2 * pi10) < 4.5 * se


def test_adjusted_residual_formula():
    design = _design()
    counts = GroupedCounts((6, 8, 11, 12, 14, 15, 17, 33, 26, 21, 14, 23))
    pi = cell_probabilities(THETA, design).values
    expected = math.sqrt(200) * (counts.array / 200 - pi) / np.sqrt(pi * (1 - pi))
    np.testing.assert_allclose(adjusted_residuals(counts, THETA, design), expected)


def test_moving_counts_shifts_residuals_linearly():
    design = _design()
    base = GroupedCounts((6, 8, 11, 12, 14, 15, 17, 33, 26, 21, 14, 23))
    moved = GroupedCounts((6, 8, 11, 12, 14, 15, 17, 33, 26, 26, 9, 23))
    pi = cell_probabilities(THETA, design).values
    delta = adjusted_residuals(moved, THETA, design) - adjusted_residuals(base, THETA, design)
    assert delta[9] == pytest.approx(math.sqrt(200) * (5 / 200) / math.sqrt(pi[9] * (1 - pi[9])))
    assert delta[10] == pytest.approx(-math.sqrt(200) * (5 / 200) / math.sqrt(pi[10] * (1 - pi[10])))
    np.testing.assert_allclose(np.delete(delta, [9, 10]), 0.0, atol=1e-12)


def test_residuals_reject_empty_or_mismatched_counts():
    with pytest.raises(ValueError, match="at least one observation"):
        adjusted_residuals(GroupedCounts(tuple([0] * 12)), THETA, _design())
    with pytest.raises(ValueError, match="L\\+1"):
        adjusted_residuals(GroupedCounts((1, 2, 3)), THETA, _design())
