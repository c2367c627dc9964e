"""Counter-based random keys, Brownian paths and exact forward drivers.

Every independent Brownian motion used by the estimator is addressed by a
128-bit key. Child keys are derived structurally from a parent key, a branch
tag and a tuple of integer indices, so the random numbers consumed by any
sub-computation depend only on its position in the recursion tree and never
on evaluation order.

Key derivation and the Gaussian stream are built from the SplitMix64
finalizer applied to unsigned 64-bit lanes. All arithmetic is modulo 2**64
and little-endian independent (no byte reinterpretation), so results agree
across platforms.

Root key from a CLI seed ``s`` (u64)::

    hi = mix(s ^ 0x6a09e667f3bcc908)
    lo = mix(hi + 0xbb67ae8584caa73b)

Gaussian draw number ``c`` of key ``(hi, lo)``::

    bits = mix(mix(hi + (c + 1) * GOLDEN) ^ lo)
    u    = ((bits >> 11) + 0.5) * 2**-53
    z    = Phi^{-1}(u)
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_WORD_SALT = np.uint64(0xD1B54A32D192ED03)
_LANE_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_SEED_HI = 0x6A09E667F3BCC908
_SEED_LO = 0xBB67AE8584CAA73B
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53


class Branch(enum.IntEnum):
    """Tags separating the independent key families of one estimator call."""

    TERMINAL_SAMPLE = 1
    F_SAMPLE_CURRENT = 2
    F_SAMPLE_PREVIOUS = 3
    PATH = 4
    RUN = 5


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def _as_u64(value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    # two's complement, so negative indices stay distinct
    return arr.astype(np.int64).view(np.uint64)


def _absorb(hi: np.ndarray, lo: np.ndarray, word) -> tuple[np.ndarray, np.ndarray]:
    # For a fixed word this is a bijection of (hi, lo); distinct words from
    # the same parent always give distinct lo lanes.
    a = _mix(_as_u64(word) ^ _WORD_SALT)
    h1 = _mix(hi ^ a)
    l1 = _mix(lo + h1 + _LANE_SALT)
    h2 = _mix(h1 ^ l1)
    return h2, l1


def derive_keys(hi: np.ndarray, lo: np.ndarray, branch: int,
                indices: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised child-key derivation.

    ``hi``/``lo`` and every entry of ``indices`` are broadcast against each
    other, so a column of parent keys combined with a row of sample indices
    yields the full grid of children in one call.
    """
    with np.errstate(over="ignore"):
        hi, lo = _absorb(np.asarray(hi, dtype=np.uint64),
                         np.asarray(lo, dtype=np.uint64), int(branch))
        hi, lo = _absorb(hi, lo, len(indices))
        for idx in indices:
            hi, lo = _absorb(hi, lo, idx)
    return hi, lo


@dataclass(frozen=True)
class RngKey:
    """A 128-bit key plus the index path that produced it."""

    hi: int
    lo: int
    path: tuple = field(default=(), compare=False)

    @property
    def state(self) -> int:
        return (self.hi << 64) | self.lo

    @property
    def path_digest(self) -> str:
        return hashlib.blake2b(repr(self.path).encode(), digest_size=8).hexdigest()

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.hi], dtype=np.uint64),
                np.array([self.lo], dtype=np.uint64))


def root_key(seed: int) -> RngKey:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    with np.errstate(over="ignore"):
        hi = _mix(np.array([seed ^ _SEED_HI], dtype=np.uint64))
        lo = _mix(hi + np.uint64(_SEED_LO))
    return RngKey(int(hi[0]), int(lo[0]), (("seed", seed),))


def derive_child_key(parent: RngKey, branch: Branch | int,
                     indices: Sequence[int] = ()) -> RngKey:
    """Deterministic child of ``parent`` for the given branch and index tuple."""
    indices = [int(i) for i in indices]
    p_hi, p_lo = parent.arrays()
    hi, lo = derive_keys(p_hi, p_lo, branch,
                         [np.array([i], dtype=np.int64) for i in indices])
    return RngKey(int(hi[0]), int(lo[0]),
                  parent.path + ((Branch(branch).name, *indices),))


def uniforms(hi: np.ndarray, lo: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` uniforms in (0, 1) of every key; shape ``(*hi.shape, count)``."""
    hi = np.asarray(hi, dtype=np.uint64)[..., None]
    lo = np.asarray(lo, dtype=np.uint64)[..., None]
    c = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(_mix(hi + c * GOLDEN) ^ lo)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def normals(hi: np.ndarray, lo: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` standard normals of every key (inverse-CDF method)."""
    return ndtri(uniforms(hi, lo, count))


@dataclass(frozen=True)
class BrownianPath:
    """Increments ``W_t - W_s`` recorded at ``times``; ``values`` has shape (n, d)."""

    s: float
    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> np.ndarray:
        hit = np.flatnonzero(self.times == t)
        if hit.size == 0:
            raise ValueError(f"t={t} is not a recorded path time")
        return self.values[hit[0]]


def _check_times(s: float, times: np.ndarray) -> None:
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if times[0] <= s or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing and > s")


def sample_brownian_path(key: RngKey, s: float, times: Sequence[float],
                         dim: int) -> BrownianPath:
    times = np.asarray(times, dtype=np.float64)
    _check_times(s, times)
    hi, lo = key.arrays()
    z = normals(hi, lo, times.size * dim).reshape(times.size, dim)
    dt = np.diff(times, prepend=s)
    values = np.cumsum(np.sqrt(dt)[:, None] * z, axis=0)
    return BrownianPath(float(s), times, values)


class DriverKind(enum.Enum):
    ABM = "abm"
    GBM = "gbm"


@dataclass(frozen=True)
class Driver:
    """Exact forward model.

    ABM: ``X_t = x + sigma_bar * (W_t - W_s)`` (``sigma_bar = 1`` is the
    plain heat-equation case). GBM: ``X_t = x * exp((mu_bar - sigma_bar**2/2)
    (t - s) + sigma_bar * (W_t - W_s))`` componentwise. In both cases the
    integrand vector is ``(1, (W_t - W_s) / (t - s))``.
    """

    kind: DriverKind
    mu_bar: float = 0.0
    sigma_bar: float = 1.0

    def __post_init__(self):
        if self.sigma_bar <= 0:
            raise ValueError("sigma_bar must be positive")
        if self.kind is DriverKind.ABM and self.mu_bar != 0.0:
            raise ValueError("the ABM driver has no drift")

    def forward(self, x: np.ndarray, elapsed, dw: np.ndarray) -> np.ndarray:
        """Broadcasting state map; ``elapsed`` is ``t - s``."""
        if self.kind is DriverKind.ABM:
            return x + self.sigma_bar * dw
        drift = (self.mu_bar - 0.5 * self.sigma_bar**2) * elapsed
        return x * np.exp(drift + self.sigma_bar * dw)

    def check_point(self, x: np.ndarray) -> None:
        if self.kind is DriverKind.GBM and np.any(np.asarray(x) <= 0):
            raise ValueError("GBM driver needs strictly positive coordinates")


def driver_eval(driver: Driver, x: Sequence[float], s: float,
                path: BrownianPath, t: float) -> tuple[np.ndarray, np.ndarray]:
    """State ``X_t`` and integrand ``I_t`` along ``path``."""
    x = np.asarray(x, dtype=np.float64)
    driver.check_point(x)
    if t == s:
        return x.copy(), np.zeros(x.size + 1)
    dw = path.at(t)
    state = driver.forward(x, t - s, dw)
    return state, np.concatenate(([1.0], dw / (t - s)))
