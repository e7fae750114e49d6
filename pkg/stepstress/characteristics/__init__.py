"""Lifetime characteristics under normal operating conditions."""

from stepstress.characteristics.lifetime import (
    CharacteristicEstimate,
    NocQuery,
    closed_form_mean_a1_partial,
    cdf_at,
    characteristic_ci,
    characterize,
    hazard_rate,
    hazard_rate_at,
    mean_lifetime,
    mean_lifetime_at,
    mean_lifetime_gradient,
    quantile,
    quantile_at,
    quantile_gradient,
    reliability_at,
)

__all__ = [
    "CharacteristicEstimate",
    "NocQuery",
    "closed_form_mean_a1_partial",
    "cdf_at",
    "characteristic_ci",
    "characterize",
    "hazard_rate",
    "hazard_rate_at",
    "mean_lifetime",
    "mean_lifetime_at",
    "mean_lifetime_gradient",
    "quantile",
    "quantile_at",
    "quantile_gradient",
    "reliability_at",
]
