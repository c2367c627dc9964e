"""The five benchmark problems: parameters, terminal data and nonlinearities."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .core import PdeProblem, Variant
from .stochastics import Driver, DriverKind


class ExampleName(enum.Enum):
    DEFAULT_RISK = "default-risk"
    CVA = "cva"
    BORROW_LEND = "borrow-lend"
    ALLEN_CAHN = "allen-cahn"
    EXPLICIT = "explicit"

    @classmethod
    def parse(cls, name: "str | ExampleName") -> "ExampleName":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower().replace("_", "-"))
        except ValueError:
            choices = ", ".join(e.value for e in cls)
            raise ValueError(f"unknown example {name!r}; choose one of {choices}") from None


@dataclass(frozen=True)
class ExampleConfig:
    name: ExampleName
    dim: int
    problem: PdeProblem
    driver: Driver
    variant: Variant
    rho_max: int
    closed_form: Optional[Callable[[float, np.ndarray], float]] = None


def closed_form_explicit(s: float, x) -> float:
    """Logistic exact solution of the explicit example, ``sigmoid(s + sum(x))``.

    Evaluated in the precision of the inputs (long double stays long double).
    """
    return expit(s + np.sum(x))


def _default_risk(d: int) -> ExampleConfig:
    delta, R = 2.0 / 3.0, 0.02
    gamma_h, gamma_l = 0.2, 0.02
    v_h, v_l = (50.0, 120.0) if d == 1 else (47.0, 65.0)
    slope = (gamma_h - gamma_l) / (v_h - v_l)

    def f(t, x, y, z):
        intensity = np.where(y < v_h, gamma_h,
                             np.where(y >= v_l, gamma_l, slope * (y - v_h) + gamma_h))
        return -(1.0 - delta) * intensity * y - R * y

    def g(x):
        return np.min(x, axis=-1)

    problem = PdeProblem(d, 1.0, g, f, np.full(d, 100.0))
    return ExampleConfig(ExampleName.DEFAULT_RISK, d, problem,
                         Driver(DriverKind.GBM, mu_bar=0.02, sigma_bar=0.2),
                         Variant.SQRT_F, 7)


def _cva(d: int) -> ExampleConfig:
    beta = 0.03
    K1, K2, L = (90.0, 110.0, 10.0) if d == 1 else (30.0, 60.0, 15.0)

    def f(t, x, y, z):
        return beta * (np.maximum(y, 0.0) - y)

    def g(x):
        low = np.min(x, axis=-1)
        return np.maximum(low - K1, 0.0) - np.maximum(low - K2, 0.0) - L

    problem = PdeProblem(d, 2.0, g, f, np.full(d, 100.0))
    return ExampleConfig(ExampleName.CVA, d, problem,
                         Driver(DriverKind.GBM, mu_bar=0.0, sigma_bar=0.2),
                         Variant.SQRT_F, 7)


def _borrow_lend(d: int) -> ExampleConfig:
    mu_bar, sigma_bar = 0.06, 0.2
    R_l, R_b = 0.04, 0.06

    def f(t, x, y, z):
        zsum = np.sum(z, axis=-1)
        return (-R_l * y - (mu_bar - R_l) / sigma_bar * zsum
                + (R_b - R_l) * np.maximum(zsum / sigma_bar - y, 0.0))

    if d == 1:
        def g(x):
            return np.maximum(x[..., 0] - 100.0, 0.0)
    else:
        def g(x):
            top = np.max(x, axis=-1)
            return np.maximum(top - 120.0, 0.0) - 2.0 * np.maximum(top - 150.0, 0.0)

    problem = PdeProblem(d, 0.5, g, f, np.full(d, 100.0))
    return ExampleConfig(ExampleName.BORROW_LEND, d, problem,
                         Driver(DriverKind.GBM, mu_bar=mu_bar, sigma_bar=sigma_bar),
                         Variant.SQRT_F, 7)


def _allen_cahn(d: int) -> ExampleConfig:
    def f(t, x, y, z):
        return y - y**3

    def g(x):
        return 1.0 / (1.0 + np.max(x * x, axis=-1))

    problem = PdeProblem(d, 1.0, g, f, np.zeros(d))
    return ExampleConfig(ExampleName.ALLEN_CAHN, d, problem,
                         Driver(DriverKind.ABM), Variant.FULL_F, 5)


def _explicit(d: int) -> ExampleConfig:
    sigma_bar, T = 0.25, 0.5
    shift = (2.0 + sigma_bar**2 * d) / (2.0 * sigma_bar**2 * d)

    def f(t, x, y, z):
        return sigma_bar * (y - shift) * np.sum(z, axis=-1)

    def g(x):
        return expit(T + np.sum(x, axis=-1))

    problem = PdeProblem(d, T, g, f, np.zeros(d))
    return ExampleConfig(ExampleName.EXPLICIT, d, problem,
                         Driver(DriverKind.ABM, sigma_bar=sigma_bar), Variant.FULL_F, 5,
                         closed_form=closed_form_explicit)


_BUILDERS = {
    ExampleName.DEFAULT_RISK: _default_risk,
    ExampleName.CVA: _cva,
    ExampleName.BORROW_LEND: _borrow_lend,
    ExampleName.ALLEN_CAHN: _allen_cahn,
    ExampleName.EXPLICIT: _explicit,
}


def build_example(name: "str | ExampleName", dim: int) -> ExampleConfig:
    """Configured benchmark problem.

    The threshold, strike and payoff parameters distinguish ``dim == 1``
    from the high-dimensional parameter set; every ``dim != 1`` uses the
    latter.
    """
    name = ExampleName.parse(name)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return _BUILDERS[name](int(dim))
