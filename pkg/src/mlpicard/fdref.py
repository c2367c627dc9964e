"""One-dimensional finite-difference reference values.

Backward in time from ``T`` on a truncated uniform grid (log-price for GBM
problems). The linear part is Crank-Nicolson, the nonlinearity is treated explicitly
by second-order Adams-Bashforth extrapolation from the two previous time
levels (IMEX). The first steps are split into implicit-Euler half steps
(Rannacher start-up) to damp the oscillations a kinked payoff causes under
Crank-Nicolson. Boundaries assume zero curvature.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .examples import ExampleConfig
from .stochastics import DriverKind

_BLOWUP = 1e12


class FdScheme(enum.Enum):
    GBM_GRID = "gbm"
    ABM_GRID = "abm"


class FdInstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class FdConfig:
    """Grid settings; ``space_points`` defaults to ``4 * nsteps`` intervals."""

    nsteps: int = 2**11
    space_points: Optional[int] = None
    domain: Optional[tuple[float, float]] = None
    scheme: Optional[FdScheme] = None
    width: float = 6.0
    rannacher_steps: int = 2  # at least one is always taken to start the extrapolation

    def __post_init__(self):
        if self.nsteps < 2:
            raise ValueError("need at least 2 time steps")
        if self.space_points is not None and self.space_points < 3:
            raise ValueError("need at least 3 grid points")


def _operator(a: float, b: float, h: float, n_int: int) -> np.ndarray:
    """Banded (1, 1) matrix of ``a u'' + b u'`` on interior nodes, zero-curvature ends."""
    alpha = a / h**2 - b / (2 * h)
    beta = -2 * a / h**2
    gamma = a / h**2 + b / (2 * h)
    ab = np.zeros((3, n_int))
    ab[0, 1:] = gamma
    ab[1, :] = beta
    ab[2, :-1] = alpha
    # u_0 = 2 u_1 - u_2 and u_M = 2 u_{M-1} - u_{M-2}
    ab[1, 0] = beta + 2 * alpha
    ab[0, 1] = gamma - alpha
    ab[1, -1] = beta + 2 * gamma
    ab[2, -2] = alpha - gamma
    return ab


def _apply(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def _extend(v: np.ndarray) -> np.ndarray:
    return np.concatenate(([2 * v[0] - v[1]], v, [2 * v[-1] - v[-2]]))


def fd_solve(config: FdConfig, example: ExampleConfig, t0: float = 0.0,
             x0: Optional[float] = None) -> float:
    """Reference value ``u(t0, x0)`` of a one-dimensional example."""
    if example.dim != 1:
        raise ValueError("finite differences are one-dimensional only")
    problem, driver = example.problem, example.driver
    T = problem.horizon
    if not 0 <= t0 < T:
        raise ValueError(f"t0={t0} outside [0, {T})")
    x0 = float(problem.eval_point[0] if x0 is None else x0)
    scheme = config.scheme or (FdScheme.GBM_GRID if driver.kind is DriverKind.GBM
                               else FdScheme.ABM_GRID)
    sig = driver.sigma_bar
    spread = config.width * sig * np.sqrt(T - t0)
    if scheme is FdScheme.GBM_GRID:
        if x0 <= 0:
            raise ValueError("log-price grid needs x0 > 0")
        centre = np.log(x0)
        a, b = 0.5 * sig**2, driver.mu_bar - 0.5 * sig**2
    else:
        centre = x0
        a, b = 0.5 * sig**2, 0.0
    lo, hi = config.domain or (centre - spread, centre + spread)
    if scheme is FdScheme.GBM_GRID and config.domain is not None:
        lo, hi = np.log(lo), np.log(hi)
    if not lo < centre < hi:
        raise ValueError("domain must contain x0 strictly")

    M = config.space_points or 4 * config.nsteps
    grid = np.linspace(lo, hi, M + 1)
    h = grid[1] - grid[0]
    states = np.exp(grid) if scheme is FdScheme.GBM_GRID else grid
    states_2d = states[:, None]
    inner = slice(1, M)
    n_int = M - 1

    L = _operator(a, b, h, n_int)
    ident = np.zeros_like(L)
    ident[1] = 1.0

    def f_term(t: float, u: np.ndarray) -> np.ndarray:
        # z = sigma(t, x)^T du/dx, i.e. sigma_bar * du/dgrid on both grids
        z = sig * np.gradient(u, h)
        t_arr = np.full(u.shape, t)
        return problem.nonlinearity(t_arr, states_2d, u, z[:, None])[inner]

    dt = (T - t0) / config.nsteps
    u = np.asarray(problem.terminal(states_2d), dtype=np.float64)
    cn_lhs = ident - 0.5 * dt * L
    half_lhs = ident - 0.5 * dt * L  # implicit Euler with step dt/2
    t = T
    f_prev = None
    for step in range(config.nsteps):
        f_now = f_term(t, u)
        if step < max(config.rannacher_steps, 1):
            v = u[inner]
            for sub in range(2):
                f_sub = f_now if sub == 0 else f_term(t - 0.5 * dt, _extend(v))
                v = solve_banded((1, 1), half_lhs, v + 0.5 * dt * f_sub)
        else:
            v = u[inner]
            rhs = v + 0.5 * dt * _apply(L, v) + dt * (1.5 * f_now - 0.5 * f_prev)
            v = solve_banded((1, 1), cn_lhs, rhs)
        f_prev = f_now
        u = _extend(v)
        t -= dt
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > _BLOWUP:
            raise FdInstabilityError(
                f"finite differences blew up for {example.name.value} with {config}")
    target = np.log(x0) if scheme is FdScheme.GBM_GRID else x0
    return float(np.interp(target, grid, u))
