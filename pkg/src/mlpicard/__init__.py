"""Multilevel Picard approximations for high-dimensional semilinear parabolic PDEs."""

from .core import (
    DEFAULT_BUDGET,
    DrawBudgetExceeded,
    DrawCounter,
    Estimate,
    NonFiniteEstimateError,
    PdeProblem,
    SchemeParams,
    Variant,
    base_estimate,
    mlp_estimate,
    mlp_estimate_batch,
    predicted_draw_count,
)
from .stochastics import Branch, Driver, DriverKind, RngKey, derive_child_key, root_key

__all__ = [
    "DEFAULT_BUDGET",
    "Branch",
    "DrawBudgetExceeded",
    "DrawCounter",
    "Driver",
    "DriverKind",
    "Estimate",
    "NonFiniteEstimateError",
    "PdeProblem",
    "RngKey",
    "SchemeParams",
    "Variant",
    "base_estimate",
    "derive_child_key",
    "mlp_estimate",
    "mlp_estimate_batch",
    "predicted_draw_count",
    "root_key",
]
