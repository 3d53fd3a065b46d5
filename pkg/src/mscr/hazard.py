"""Detection hazards and survival probabilities.

The instantaneous detection rate at a trap follows an Ornstein-Uhlenbeck
mean/covariance structure: after an individual is seen at trap location z*
at time t*, the hazard concentrates around z* and relaxes back toward the
activity center s at rate beta. Before any detection (or in the standard
SCR model) the hazard takes its half-normal limiting form, which is also
the beta -> infinity limit of the memory form.

Survival over an interval is the exponentiated negative integral of the
cumulative hazard; for the time-varying memory hazard the integral is
approximated with a midpoint rule on equal-width sub-intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import TrapArray

MSCR = "MSCR"
SCR = "SCR"

# Sigma^-1 diverges as dt -> 0; the floor keeps the hazard finite (a near
# point mass at z*) without branching in the likelihood.
VARIANCE_FLOOR_REL = 1e-12

# e^{-beta dt} below this is indistinguishable from the half-normal limit
# in double precision; used to route long-gap sub-intervals to the cheap
# time-constant path.
MEMORY_DEAD_WEIGHT = 1e-14


@dataclass(frozen=True)
class ModelParams:
    """Hazard parameters: peak rate h0 (1/day), spatial scale sigma2 (km^2),
    reversion rate beta (1/day, memory model only)."""

    h0: float
    sigma2: float
    beta: float | None = None
    kind: str = MSCR

    def __post_init__(self):
        if self.kind not in (MSCR, SCR):
            raise ConfigurationError(f"unknown model kind: {self.kind!r}")
        if not (np.isfinite(self.h0) and self.h0 > 0):
            raise DomainError("h0 must be positive and finite")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise DomainError("sigma2 must be positive and finite")
        if self.kind == MSCR:
            if self.beta is None or not (np.isfinite(self.beta) and self.beta > 0):
                raise DomainError("beta must be positive and finite for the memory model")

    @property
    def n_hazard_params(self) -> int:
        return 3 if self.kind == MSCR else 2

    def with_values(self, h0=None, sigma2=None, beta=None) -> "ModelParams":
        return ModelParams(
            h0=self.h0 if h0 is None else h0,
            sigma2=self.sigma2 if sigma2 is None else sigma2,
            beta=(self.beta if beta is None else beta) if self.kind == MSCR else None,
            kind=self.kind,
        )


@dataclass(frozen=True)
class MemoryState:
    """Most recent detection: trap location z* and its time t* (days)."""

    loc: tuple[float, float]
    time: float


@dataclass(frozen=True)
class TimeGrid:
    """Equal-width sub-intervals of [tau0, tau1] with midpoint eval points."""

    bounds: np.ndarray  # (B+1,) strictly increasing

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        object.__setattr__(self, "bounds", b)
        if b.ndim != 1 or b.size < 2:
            raise ConfigurationError("time grid needs at least one interval")
        widths = np.diff(b)
        if np.any(widths <= 0):
            raise ConfigurationError("time grid bounds must be strictly increasing")
        if widths.max() - widths.min() > 1e-9 * max(widths.max(), 1.0):
            raise ConfigurationError("time grid intervals must be equally sized")

    @classmethod
    def uniform(cls, tau0: float, tau1: float, n: int) -> "TimeGrid":
        if tau1 <= tau0:
            raise ConfigurationError("time grid requires tau1 > tau0")
        if n < 1:
            raise ConfigurationError("time grid requires n >= 1")
        return cls(bounds=np.linspace(tau0, tau1, n + 1))

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bounds[:-1] + self.bounds[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bounds)

    @property
    def n_intervals(self) -> int:
        return self.bounds.size - 1


def n_subintervals(tau0: float, tau1: float, total_time: float, B: int) -> int:
    """Sub-interval count for [tau0, tau1] under a study-wide budget B.

    B is a global per-fit setting; each interval is subdivided in proportion
    to its length so the sub-interval width is about total_time / B.
    """
    if B < 1:
        raise ConfigurationError("B must be >= 1")
    if tau1 <= tau0:
        return 0
    return max(1, int(math.ceil((tau1 - tau0) * B / total_time - 1e-9)))


def ou_mean(s, mem: MemoryState, t: float, beta: float) -> np.ndarray:
    """Hazard center at time t: convex combination of z* and s with weight
    e^{-beta (t - t*)} on the previous location."""
    if t <= mem.time:
        raise DomainError(f"evaluation time {t} must exceed memory time {mem.time}")
    a = math.exp(-beta * (t - mem.time))
    z = np.asarray(mem.loc, dtype=float)
    sv = np.asarray(s, dtype=float)
    return a * z + (1.0 - a) * sv


def ou_variance(sigma2: float, beta: float, dt: float) -> float:
    """Scalar hazard variance sigma2 (1 - e^{-2 beta dt}), floored at
    sigma2 * 1e-12 so the inverse stays finite as dt -> 0."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    return max(sigma2 * (1.0 - math.exp(-2.0 * beta * dt)), sigma2 * VARIANCE_FLOOR_REL)


def limiting_hazard(z, s, h0: float, sigma2: float) -> float:
    """Half-normal hazard h0 exp(-|z - s|^2 / (2 sigma2))."""
    z = np.asarray(z, dtype=float)
    sv = np.asarray(s, dtype=float)
    d2 = float(np.sum((z - sv) ** 2))
    return h0 * math.exp(-d2 / (2.0 * sigma2))


def hazard(z, t: float, s, mem: MemoryState | None, params: ModelParams) -> float:
    """Detection rate at location z and time t for activity center s.

    Uses the memory form when `params.kind` is MSCR and a previous
    detection is supplied; otherwise (standard SCR, or before any
    detection) the half-normal limiting form. Always in (0, h0].
    """
    z = np.asarray(z, dtype=float)
    sv = np.asarray(s, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(sv)) and np.isfinite(t)):
        raise DomainError("non-finite hazard inputs")
    if params.kind == SCR or mem is None:
        return limiting_hazard(z, sv, params.h0, params.sigma2)
    mu = ou_mean(sv, mem, t, params.beta)
    v = ou_variance(params.sigma2, params.beta, t - mem.time)
    d2 = float(np.sum((z - mu) ** 2))
    return params.h0 * math.exp(-d2 / (2.0 * v))


def cumulative_hazard(t: float, s, mem: MemoryState | None, params: ModelParams,
                      traps: TrapArray) -> float:
    """Rate of detection by any trap: sum of the hazard over the K traps."""
    if params.kind == SCR or mem is None:
        return cumulative_limiting_hazard(s, params, traps)
    mu = ou_mean(np.asarray(s, dtype=float), mem, t, params.beta)
    v = ou_variance(params.sigma2, params.beta, t - mem.time)
    d2 = np.sum((traps.xy - mu) ** 2, axis=1)
    return float(params.h0 * np.sum(np.exp(-d2 / (2.0 * v))))


def cumulative_limiting_hazard(s, params: ModelParams, traps: TrapArray) -> float:
    """Half-normal cumulative hazard: sum of limiting hazards over traps."""
    sv = np.asarray(s, dtype=float)
    d2 = np.sum((traps.xy - sv) ** 2, axis=1)
    return float(params.h0 * np.sum(np.exp(-d2 / (2.0 * params.sigma2))))


def survival(tau0: float, tau1: float, s, mem: MemoryState | None,
             params: ModelParams, traps: TrapArray,
             grid: TimeGrid | None = None) -> float:
    """Probability of remaining undetected by every trap over (tau0, tau1).

    For the time-constant half-normal hazard (SCR, or no previous
    detection) the integral is exact. For the memory hazard the integral
    is a midpoint-rule sum over `grid`, which must span [tau0, tau1].
    """
    if tau1 < tau0:
        raise DomainError("tau1 must be >= tau0")
    if tau1 == tau0:
        return 1.0
    if params.kind == SCR or mem is None:
        return math.exp(-(tau1 - tau0) * cumulative_limiting_hazard(s, params, traps))
    if grid is None:
        raise ConfigurationError("memory-model survival requires a time grid")
    tol = 1e-9 * max(1.0, abs(tau1))
    if abs(grid.bounds[0] - tau0) > tol or abs(grid.bounds[-1] - tau1) > tol:
        raise ConfigurationError(
            f"time grid [{grid.bounds[0]}, {grid.bounds[-1]}] does not span "
            f"[{tau0}, {tau1}]")
    integral = hazard_integral_midpoint(grid.midpoints, grid.widths,
                                        np.asarray(s, dtype=float), mem, params, traps)
    return math.exp(-integral)


def hazard_integral_midpoint(midpoints: np.ndarray, widths: np.ndarray, s,
                             mem: MemoryState, params: ModelParams,
                             traps: TrapArray) -> float:
    """Midpoint-rule integral of the memory cumulative hazard.

    Vectorized over sub-intervals; sub-intervals whose memory weight has
    decayed below double precision use the limiting hazard directly.
    """
    if np.any(midpoints <= mem.time):
        raise DomainError("hazard evaluation before the memory time")
    sv = np.asarray(s, dtype=float)
    a = np.exp(-params.beta * (midpoints - mem.time))
    live = a >= MEMORY_DEAD_WEIGHT
    total = 0.0
    dead_width = float(np.sum(widths[~live]))
    if dead_width > 0.0:
        total += dead_width * cumulative_limiting_hazard(sv, params, traps)
    if np.any(live):
        al = a[live]
        v = np.maximum(params.sigma2 * (1.0 - al * al),
                       params.sigma2 * VARIANCE_FLOOR_REL)
        z = np.asarray(mem.loc, dtype=float)
        mu = al[:, None] * z[None, :] + (1.0 - al)[:, None] * sv[None, :]  # (b, 2)
        d2 = np.sum((traps.xy[None, :, :] - mu[:, None, :]) ** 2, axis=2)  # (b, K)
        hdot = params.h0 * np.sum(np.exp(-d2 / (2.0 * v)[:, None]), axis=1)
        total += float(np.dot(widths[live], hdot))
    return total
