"""Gauss-Legendre rules and the inverse-gamma node schedule."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma


class QuadratureError(RuntimeError):
    pass


def round_half_away(value: float) -> int:
    """Round to nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    lower: float = -1.0
    upper: float = 1.0

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.nodes)))


@functools.lru_cache(maxsize=None)
def _legendre_roots(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p0, p1 = np.ones_like(x), x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        # p1 = P_n(x), p0 = P_{n-1}(x)
        dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else np.ones_like(x)
        step = p1 / dp
        x = x - step
        if np.max(np.abs(step)) < 1e-14:
            break
    else:
        raise QuadratureError(f"Newton iteration for n={n} Legendre roots did not converge")
    p0, p1 = np.ones_like(x), x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else np.ones_like(x)
    order = np.argsort(x)
    x = x[order]
    w = (2.0 / ((1.0 - x * x) * dp[order] ** 2))
    # exact symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on (-1, 1), nodes ascending."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = _legendre_roots(int(n))
    return QuadratureRule(x, w)


def rescale(rule: QuadratureRule, s: float, T: float) -> QuadratureRule:
    if not s < T:
        raise ValueError(f"empty interval ({s}, {T})")
    half = 0.5 * (T - s)
    scale = half / (0.5 * (rule.upper - rule.lower))
    nodes = s + (rule.nodes - rule.lower) * scale
    return QuadratureRule(nodes, rule.weights * scale, s, T)


def inverse_gamma(y: float, tol: float = 1e-12) -> float:
    """The x >= 2 with Gamma(x) = y; values y <= 1 clamp to 2."""
    if y < 0:
        raise ValueError("inverse_gamma needs y >= 0")
    if y <= 1.0:
        return 2.0
    target = math.log(y)
    lo, hi = 2.0, 3.0
    while math.lgamma(hi) < target:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        resid = math.lgamma(x) - target
        if resid > 0:
            hi = x
        else:
            lo = x
        newton = x - resid / float(digamma(x))
        x_new = newton if lo < newton < hi else 0.5 * (lo + hi)
        if abs(x_new - x) < tol or hi - lo < tol:
            return x_new
        x = x_new
    raise QuadratureError(f"inverse_gamma({y}) did not converge")


@functools.lru_cache(maxsize=None)
def node_count(k: int, l: int, rho: int) -> int:
    """Node count of the level-(k, l) rule: round(inverse_gamma(rho**((k-l)/2))), >= 2."""
    if not k >= l >= 0 or rho < 1:
        raise ValueError(f"bad schedule arguments k={k}, l={l}, rho={rho}")
    return max(2, round_half_away(inverse_gamma(rho ** ((k - l) / 2))))
