"""Full-history recursive multilevel Picard estimator.

``U_k(s, x)`` approximates ``(u(s, x), sigma(s, x)^T grad u(s, x))`` for the
semilinear PDE with terminal data ``g`` and nonlinearity ``f``. The level-k
estimator is::

    U_k(s, x) = (g(x), 0)
      + 1/M_g  sum_i [g(X_T^i) - g(x)] * (1, dW_i / (T - s))
      + sum_{l<k} 1/M_f^l sum_i sum_t q(t) [f(t, X_t^i, U_l(t, X_t^i))
                                        - 1{l>0} f(t, X_t^i, U_{l-1}(t, X_t^i))]
                                     * (1, dW_i(t) / (t - s))

where the two inner estimators inside one difference use independent keys.

The implementation is batched: one call evaluates a whole array of points,
each with its own key. Because the sample and node counts depend only on
``(k, l, rho)``, the recursion tree has the same shape for every point, so
children of all points at one level are gathered into a single array.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .quadrature import gauss_legendre, node_count, round_half_away
from .stochastics import Branch, Driver, RngKey, derive_keys, normals

DEFAULT_BUDGET = 10**10
# rows * draws-per-row processed in one vectorised chunk
_CHUNK_DRAWS = 2_000_000

Terminal = Callable[[np.ndarray], np.ndarray]
Nonlinearity = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _identity(x: np.ndarray) -> np.ndarray:
    return x


@dataclass(frozen=True)
class PdeProblem:
    """Semilinear PDE data.

    ``terminal`` maps an ``(n, d)`` array of states to ``n`` values.
    ``nonlinearity(t, x, y, z)`` takes ``t`` of shape ``(n,)``, ``x`` and
    ``z`` of shape ``(n, d)`` and ``y`` of shape ``(n,)``.
    """

    dim: int
    horizon: float
    terminal: Terminal
    nonlinearity: Nonlinearity
    eval_point: np.ndarray
    space_shift: Callable[[np.ndarray], np.ndarray] = _identity

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        x0 = np.asarray(self.eval_point, dtype=np.float64).reshape(-1)
        if x0.size != self.dim:
            raise ValueError(f"eval_point has {x0.size} coordinates, expected {self.dim}")
        object.__setattr__(self, "eval_point", x0)


class Variant(enum.Enum):
    SQRT_F = "sqrt_f"
    FULL_F = "full_f"


@dataclass(frozen=True)
class SchemeParams:
    rho: int
    variant: Variant = Variant.FULL_F
    node_offset: int = 0

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("rho must be a positive integer")

    def mg(self, k: int, l: int) -> int:
        return self.rho ** (k - l)

    def mf(self, k: int, l: int) -> int:
        if self.variant is Variant.SQRT_F:
            return max(1, round_half_away(self.rho ** ((k - l) / 2)))
        return self.rho ** (k - l)

    def nodes(self, k: int, l: int) -> int:
        return max(1, node_count(k, l, self.rho) + self.node_offset)


@dataclass(frozen=True)
class Estimate:
    value: float
    zeta: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.value], self.zeta))


class DrawBudgetExceeded(RuntimeError):
    def __init__(self, predicted: int, budget: int):
        super().__init__(f"predicted {predicted} normal draws exceeds budget {budget}")
        self.predicted = predicted
        self.budget = budget


class NonFiniteEstimateError(ArithmeticError):
    """A non-finite number appeared; ``trail`` is the index path below the root key."""

    def __init__(self, what: str, level: int, row: int, s: float, x: np.ndarray):
        self.what = what
        self.level = level
        self.row = row
        self.s = s
        self.x = np.array(x)
        self.trail: list[tuple] = []
        self.root_path: tuple = ()

    def __str__(self):
        return (f"non-finite {self.what} at level {self.level}, s={self.s}, "
                f"x={self.x.tolist()}, key path={self.root_path + tuple(self.trail)}")


@dataclass
class DrawCounter:
    """Instrumentation: counts scalar standard-normal draws."""

    draws: int = 0
    calls: dict = field(default_factory=dict)

    def add(self, n: int, level: int, rows: int) -> None:
        self.draws += n
        self.calls[level] = self.calls.get(level, 0) + rows


def predicted_draw_count(problem: PdeProblem, params: SchemeParams, k: int) -> int:
    """Exact number of normal draws used by one level-k estimate at one point."""
    if k < 0:
        raise ValueError("level must be >= 0")
    return _draws_per_point(problem.dim, params, k)


def _draws_per_point(d: int, params: SchemeParams, k: int) -> int:
    @functools.lru_cache(maxsize=None)
    def count(level: int) -> int:
        total = d * params.mg(level, 0)
        for l in range(level):
            inner = count(l) + (count(l - 1) if l > 0 else 0)
            total += params.mf(level, l) * params.nodes(level, l) * (d + inner)
        return total
    return count(k)


class _Context:
    def __init__(self, problem: PdeProblem, driver: Driver, params: SchemeParams,
                 counter: DrawCounter | None):
        self.problem = problem
        self.driver = driver
        self.params = params
        self.counter = counter
        self.draws = {}

    def draws_per_row(self, k: int) -> int:
        if k not in self.draws:
            self.draws[k] = _draws_per_point(self.problem.dim, self.params, k)
        return self.draws[k]

    def normals(self, hi, lo, count, level):
        if self.counter is not None:
            self.counter.add(hi.size * count, level, hi.size)
        return normals(hi, lo, count)


def _check_finite(arr: np.ndarray, what: str, level: int, s, x, trail_of_row):
    bad = ~np.isfinite(arr)
    if bad.any():
        flat = int(np.flatnonzero(bad.reshape(bad.shape[0], -1).any(axis=1))[0]) \
            if arr.ndim > 1 else int(np.flatnonzero(bad)[0])
        row, trail = trail_of_row(flat)
        err = NonFiniteEstimateError(what, level, row, float(s[flat]), x[flat])
        err.trail = trail
        raise err


def _estimate(ctx: _Context, k: int, s: np.ndarray, x: np.ndarray,
              hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    n_rows = s.shape[0]
    per_row = max(1, ctx.draws_per_row(k))
    chunk = max(1, _CHUNK_DRAWS // per_row)
    if n_rows <= chunk:
        return _estimate_rows(ctx, k, s, x, hi, lo)
    out = np.empty((n_rows, x.shape[1] + 1))
    for start in range(0, n_rows, chunk):
        sl = slice(start, start + chunk)
        try:
            out[sl] = _estimate_rows(ctx, k, s[sl], x[sl], hi[sl], lo[sl])
        except NonFiniteEstimateError as err:
            err.row += start
            raise
    return out


def _estimate_rows(ctx: _Context, k: int, s: np.ndarray, x: np.ndarray,
                   hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    problem, driver, params = ctx.problem, ctx.driver, ctx.params
    T = problem.horizon
    n_rows, d = x.shape
    tau = T - s

    out = np.zeros((n_rows, d + 1))
    gx = problem.terminal(x)
    _check_finite(gx, "terminal value", k, s, x, lambda r: (r, []))
    out[:, 0] = gx

    # terminal differences; with exact drivers only the l = 0 term survives
    m = params.mg(k, 0)
    t_hi, t_lo = derive_keys(hi[:, None], lo[:, None], Branch.TERMINAL_SAMPLE,
                             [np.arange(m)[None, :]])
    z = ctx.normals(t_hi.reshape(-1), t_lo.reshape(-1), d, k).reshape(n_rows, m, d)
    dw = np.sqrt(tau)[:, None, None] * z
    x_T = driver.forward(x[:, None, :], tau[:, None, None], dw)
    g_T = problem.terminal(x_T.reshape(-1, d)).reshape(n_rows, m)
    _check_finite(g_T.reshape(-1), "terminal value", k, np.repeat(s, m),
                  x_T.reshape(-1, d),
                  lambda r: (r // m, [(Branch.TERMINAL_SAMPLE.name, r % m)]))
    diff = g_T - gx[:, None]
    out[:, 0] += diff.sum(axis=1) / m
    out[:, 1:] += (diff[:, :, None] * dw).sum(axis=1) / (m * tau[:, None])

    for l in range(k):
        out += _picard_level(ctx, k, l, s, x, hi, lo)

    _check_finite(out, "estimate", k, s, x, lambda r: (r, []))
    return out


def _picard_level(ctx: _Context, k: int, l: int, s: np.ndarray, x: np.ndarray,
                  hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    problem, driver, params = ctx.problem, ctx.driver, ctx.params
    T = problem.horizon
    n_rows, d = x.shape
    m = params.mf(k, l)
    n = params.nodes(k, l)
    rule = gauss_legendre(n)
    tau = T - s
    # nodes and weights of the rule on (s, T), one row per point
    elapsed = 0.5 * tau[:, None] * (rule.nodes[None, :] + 1.0)
    weights = 0.5 * tau[:, None] * rule.weights[None, :]
    t_nodes = s[:, None] + elapsed

    # one Brownian path per (point, sample), observed at all nodes
    sample = np.arange(m)[None, :]
    p_hi, p_lo = derive_keys(hi[:, None], lo[:, None], Branch.PATH, [l, sample])
    z = ctx.normals(p_hi.reshape(-1), p_lo.reshape(-1), n * d, k)
    z = z.reshape(n_rows, m, n, d)
    steps = np.diff(elapsed, axis=1, prepend=0.0)
    dw = np.cumsum(np.sqrt(steps)[:, None, :, None] * z, axis=2)
    states = driver.forward(x[:, None, None, :], elapsed[:, None, :, None], dw)

    shape = (n_rows, m, n)
    flat_t = np.broadcast_to(t_nodes[:, None, :], shape).reshape(-1)
    flat_x = states.reshape(-1, d)
    shifted = problem.space_shift(flat_x)
    node = np.arange(n)[None, None, :]
    sample3 = np.arange(m)[None, :, None]

    def inner(branch: Branch, level: int) -> np.ndarray:
        c_hi, c_lo = derive_keys(hi[:, None, None], lo[:, None, None], branch,
                                 [l, sample3, node])
        try:
            u = _estimate(ctx, level, flat_t, shifted, c_hi.reshape(-1), c_lo.reshape(-1))
        except NonFiniteEstimateError as err:
            row, i, j = np.unravel_index(err.row, shape)
            err.row = int(row)
            err.trail.insert(0, (branch.name, l, int(i), int(j)))
            raise
        return problem.nonlinearity(flat_t, flat_x, u[:, 0], u[:, 1:])

    f_diff = inner(Branch.F_SAMPLE_CURRENT, l)
    if l > 0:
        f_diff = f_diff - inner(Branch.F_SAMPLE_PREVIOUS, l - 1)
    _check_finite(f_diff, "nonlinearity", k, flat_t, flat_x,
                  lambda r: (int(r // (m * n)), []))
    coef = f_diff.reshape(shape) * (weights[:, None, :] / m)

    out = np.empty((n_rows, d + 1))
    out[:, 0] = coef.sum(axis=(1, 2))
    out[:, 1:] = (coef[..., None] * dw / elapsed[:, None, :, None]).sum(axis=(1, 2))
    return out


def _prepare(problem: PdeProblem, driver: Driver, s: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != problem.dim:
        raise ValueError(f"x has {x.size} coordinates, expected {problem.dim}")
    if not 0 <= s < problem.horizon:
        raise ValueError(f"s={s} outside [0, {problem.horizon})")
    driver.check_point(x)
    return x


def mlp_estimate(problem: PdeProblem, driver: Driver, params: SchemeParams, k: int,
                 s: float, x, key: RngKey, *, budget: int | None = DEFAULT_BUDGET,
                 counter: DrawCounter | None = None) -> Estimate:
    """One realisation of the level-k multilevel Picard estimate at ``(s, x)``.

    Raises
    ------
    DrawBudgetExceeded
        If the predicted number of normal draws exceeds ``budget``; nothing
        is sampled in that case.
    NonFiniteEstimateError
        If ``g``, ``f`` or an intermediate estimate is not finite.
    """
    if k < 0:
        raise ValueError("level must be >= 0")
    x = _prepare(problem, driver, s, x)
    if budget is not None:
        predicted = predicted_draw_count(problem, params, k)
        if predicted > budget:
            raise DrawBudgetExceeded(predicted, budget)
    ctx = _Context(problem, driver, params, counter)
    hi, lo = key.arrays()
    try:
        out = _estimate(ctx, k, np.array([float(s)]), x[None, :], hi, lo)
    except NonFiniteEstimateError as err:
        err.root_path = key.path
        raise
    return Estimate(float(out[0, 0]), out[0, 1:].copy())


def base_estimate(problem: PdeProblem, driver: Driver, params: SchemeParams,
                  s: float, x, key: RngKey, *, counter: DrawCounter | None = None) -> Estimate:
    """Level-0 estimate: Monte Carlo of the terminal value and its gradient weight."""
    return mlp_estimate(problem, driver, params, 0, s, x, key, budget=None, counter=counter)


def mlp_estimate_batch(problem: PdeProblem, driver: Driver, params: SchemeParams, k: int,
                       s, x, keys: tuple[np.ndarray, np.ndarray], *,
                       counter: DrawCounter | None = None) -> np.ndarray:
    """Level-k estimates for many points at once; returns an ``(n, 1 + d)`` array.

    ``keys`` is a pair of uint64 arrays (high and low lanes), one key per row.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],)).copy()
    if np.any(s < 0) or np.any(s >= problem.horizon):
        raise ValueError("all s must lie in [0, T)")
    driver.check_point(x)
    hi, lo = (np.asarray(a, dtype=np.uint64).reshape(-1) for a in keys)
    ctx = _Context(problem, driver, params, counter)
    return _estimate(ctx, k, s, x, hi, lo)
