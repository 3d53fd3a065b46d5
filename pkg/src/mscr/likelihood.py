"""Capture-history densities and the conditional log-likelihood.

Each observed individual contributes the density of its first capture, the
survival-times-hazard density of every recapture given the previous one,
and a terminal survival factor to the end of the study, all conditional on
a latent activity center. Activity centers carry a uniform prior over the
buffered region, so the marginal history density and the detection
probability are mesh-weighted averages over the spatial quadrature grid.

All per-history work is done in log space; exponentiation happens only at
reporting boundaries. Mesh sums use max-shifted log-sum-exp, so a mesh
point whose density is more than ~745 nats below the peak underflows to
an exact zero, which is the intended treatment of negligible centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError
from .geometry import SpatialMesh, SurveyWindow, TrapArray
from .hazard import (
    MEMORY_DEAD_WEIGHT,
    SCR,
    VARIANCE_FLOOR_REL,
    MemoryState,
    ModelParams,
    TimeGrid,
    cumulative_limiting_hazard,
    hazard,
    hazard_integral_midpoint,
    limiting_hazard,
    n_subintervals,
)


@dataclass(frozen=True)
class CaptureHistory:
    """Ordered detections of one individual: times (days) and trap indices."""

    individual_id: str
    times: np.ndarray        # (J,)
    trap_indices: np.ndarray  # (J,) ints into the trap array

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        k = np.asarray(self.trap_indices, dtype=np.intp)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "trap_indices", k)
        if t.ndim != 1 or t.size < 1 or k.shape != t.shape:
            raise DataError(
                f"history {self.individual_id!r}: times and trap indices must be "
                "equal-length, non-empty 1-d sequences")

    @property
    def n_detections(self) -> int:
        return self.times.size

    def validate(self, traps: TrapArray, window: SurveyWindow) -> None:
        ident = self.individual_id
        if not np.all(np.isfinite(self.times)):
            raise DataError(f"history {ident!r}: non-finite detection time")
        if np.any(np.diff(self.times) <= 0):
            raise DataError(f"history {ident!r}: detection times must be strictly increasing")
        if self.times[0] <= 0 or self.times[-1] >= window.duration:
            raise DataError(
                f"history {ident!r}: detection times must lie strictly inside "
                f"(0, {window.duration})")
        if np.any(self.trap_indices < 0) or np.any(self.trap_indices >= traps.size):
            raise DataError(f"history {ident!r}: trap index out of range")


@dataclass(frozen=True)
class Dataset:
    """Observed capture histories plus the survey geometry and window."""

    histories: tuple[CaptureHistory, ...]
    traps: TrapArray
    window: SurveyWindow

    def __post_init__(self):
        object.__setattr__(self, "histories", tuple(self.histories))
        ids = [h.individual_id for h in self.histories]
        if len(set(ids)) != len(ids):
            raise DataError("individual ids must be unique")
        for h in self.histories:
            h.validate(self.traps, self.window)

    @property
    def n_individuals(self) -> int:
        return len(self.histories)

    @property
    def n_detections(self) -> int:
        return sum(h.n_detections for h in self.histories)


# ---------------------------------------------------------------------------
# scalar (single activity center) densities, composed from the hazard layer
# ---------------------------------------------------------------------------

def log_history_density_given_ac(history: CaptureHistory, s, params: ModelParams,
                                 traps: TrapArray, window: SurveyWindow,
                                 B: int) -> float:
    """Log density of one capture history conditional on activity center s.

    First capture uses the limiting hazard from time 0; each recapture uses
    the memory hazard given the previous capture; a terminal survival factor
    runs from the last capture to T. The SCR hazard is time-constant, so all
    of its survival factors are closed-form.
    """
    T = window.duration
    times = history.times
    ks = history.trap_indices
    h0, sigma2 = params.h0, params.sigma2
    hn_dot = cumulative_limiting_hazard(s, params, traps)
    lp = -times[0] * hn_dot + math.log(limiting_hazard(traps.xy[ks[0]], s, h0, sigma2))
    if params.kind == SCR:
        for j in range(1, times.size):
            lp += -(times[j] - times[j - 1]) * hn_dot
            lp += math.log(limiting_hazard(traps.xy[ks[j]], s, h0, sigma2))
        lp += -(T - times[-1]) * hn_dot
        return lp
    for j in range(1, times.size):
        mem = MemoryState(loc=tuple(traps.xy[ks[j - 1]]), time=float(times[j - 1]))
        grid = TimeGrid.uniform(times[j - 1], times[j],
                                n_subintervals(times[j - 1], times[j], T, B))
        lp -= hazard_integral_midpoint(grid.midpoints, grid.widths, s, mem, params, traps)
        lp += math.log(hazard(traps.xy[ks[j]], times[j], s, mem, params))
    mem = MemoryState(loc=tuple(traps.xy[ks[-1]]), time=float(times[-1]))
    if T > times[-1]:
        grid = TimeGrid.uniform(times[-1], T, n_subintervals(times[-1], T, T, B))
        lp -= hazard_integral_midpoint(grid.midpoints, grid.widths, s, mem, params, traps)
    return lp


def history_density_given_ac(history: CaptureHistory, s, params: ModelParams,
                             traps: TrapArray, window: SurveyWindow, B: int) -> float:
    """Density of one capture history given its activity center."""
    return math.exp(log_history_density_given_ac(history, s, params, traps, window, B))


def detect_prob_given_ac(s, params: ModelParams, traps: TrapArray,
                         window: SurveyWindow) -> float:
    """Probability of at least one detection in [0, T] for a known center:
    1 - exp(-T * hn.(s)), with the limiting hazard."""
    return -math.expm1(-window.duration * cumulative_limiting_hazard(s, params, traps))


def detect_prob(params: ModelParams, traps: TrapArray, mesh: SpatialMesh,
                window: SurveyWindow) -> float:
    """Detection probability averaged over activity centers on the mesh."""
    d2 = _mesh_trap_sq_distances(mesh, traps)
    hn_dot = params.h0 * np.exp(-d2 / (2.0 * params.sigma2)).sum(axis=1)
    p_s = -np.expm1(-window.duration * hn_dot)
    return float(p_s.sum() * mesh.cell_area / mesh.total_area)


def marginal_history_density(history: CaptureHistory, params: ModelParams,
                             traps: TrapArray, mesh: SpatialMesh,
                             window: SurveyWindow, B: int) -> float:
    """Marginal history density under the uniform activity-center prior:
    (1/A) * sum over mesh points of the conditional density times cell area."""
    ds = Dataset(histories=(history,), traps=traps, window=window)
    ev = LikelihoodEvaluator(ds, mesh, B)
    return math.exp(ev.log_marginal_histories(params)[0])


def neg_log_likelihood(dataset: Dataset, params: ModelParams, mesh: SpatialMesh,
                       B: int) -> float:
    """Conditional negative log-likelihood -sum_i [log f(w_i) - log p(theta)].

    Infinite (not an error) if any marginal history density underflows to
    zero, so optimizers can back away from hopeless parameter values.
    """
    return LikelihoodEvaluator(dataset, mesh, B).nll(params)


# ---------------------------------------------------------------------------
# mesh-vectorized evaluator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Gap:
    """One inter-capture (or terminal) interval of a history plan."""

    t_prev: float
    k_prev: int
    t_cur: float
    k_cur: int          # -1 for the terminal survival-only gap
    dts: np.ndarray     # (nb,) midpoint offsets from t_prev
    width: float        # equal sub-interval width


@dataclass(frozen=True)
class _HistoryPlan:
    t_first: float
    k_first: int
    gaps: tuple[_Gap, ...]
    trap_counts: np.ndarray  # (K,) detections per trap, for the SCR path


def _mesh_trap_sq_distances(mesh: SpatialMesh, traps: TrapArray) -> np.ndarray:
    dx = mesh.points[:, 0][:, None] - traps.xy[:, 0][None, :]
    dy = mesh.points[:, 1][:, None] - traps.xy[:, 1][None, :]
    return dx * dx + dy * dy


class LikelihoodEvaluator:
    """Precomputed quadrature plan for repeated likelihood evaluations.

    Construction fixes the dataset, mesh, and time-quadrature budget B;
    `nll` and friends are then pure functions of the parameters. Safe to
    call concurrently.
    """

    def __init__(self, dataset: Dataset, mesh: SpatialMesh, B: int):
        self.dataset = dataset
        self.mesh = mesh
        self.B = int(B)
        self.T = dataset.window.duration
        self.sq_dist = _mesh_trap_sq_distances(mesh, traps=dataset.traps)  # (M, K)
        self._sx = np.ascontiguousarray(mesh.points[:, 0])
        self._sy = np.ascontiguousarray(mesh.points[:, 1])
        self._zx = np.ascontiguousarray(dataset.traps.xy[:, 0])
        self._zy = np.ascontiguousarray(dataset.traps.xy[:, 1])
        self._log_cell_over_area = math.log(mesh.cell_area) - math.log(mesh.total_area)
        self.plans = tuple(self._plan(h) for h in dataset.histories)

    def _plan(self, history: CaptureHistory) -> _HistoryPlan:
        times = history.times
        ks = history.trap_indices
        gaps = []
        bounds = list(zip(times[:-1], ks[:-1], times[1:], ks[1:]))
        if self.T > times[-1]:
            bounds.append((times[-1], ks[-1], self.T, -1))
        for t_prev, k_prev, t_cur, k_cur in bounds:
            nb = n_subintervals(t_prev, t_cur, self.T, self.B)
            width = (t_cur - t_prev) / nb
            dts = (np.arange(nb) + 0.5) * width
            gaps.append(_Gap(t_prev=float(t_prev), k_prev=int(k_prev),
                             t_cur=float(t_cur), k_cur=int(k_cur),
                             dts=dts, width=width))
        counts = np.bincount(ks, minlength=self.dataset.traps.size).astype(float)
        return _HistoryPlan(t_first=float(times[0]), k_first=int(ks[0]),
                            gaps=tuple(gaps), trap_counts=counts)

    # -- parameter-dependent pieces -------------------------------------

    def _limiting_pack(self, params: ModelParams):
        """(M, K) limiting hazard matrix and its row sums."""
        hn = params.h0 * np.exp(-self.sq_dist / (2.0 * params.sigma2))
        return hn, hn.sum(axis=1)

    def log_detect_prob(self, params: ModelParams) -> float:
        _, hn_dot = self._limiting_pack(params)
        return self._log_detect_prob_from(hn_dot)

    def _log_detect_prob_from(self, hn_dot: np.ndarray) -> float:
        p_s = -np.expm1(-self.T * hn_dot)
        p = p_s.sum() * self.mesh.cell_area / self.mesh.total_area
        return math.log(p) if p > 0 else -math.inf

    def _log_density_vector(self, params: ModelParams, plan: _HistoryPlan,
                            hn_dot: np.ndarray) -> np.ndarray:
        """Log conditional density of one history at every mesh point."""
        h0, sigma2 = params.h0, params.sigma2
        log_h0 = math.log(h0)
        inv2s2 = 0.5 / sigma2
        if params.kind == SCR:
            total_j = plan.trap_counts.sum()
            logf = -self.T * hn_dot + total_j * log_h0 \
                - inv2s2 * (self.sq_dist @ plan.trap_counts)
            return logf
        beta = params.beta
        logf = -plan.t_first * hn_dot + log_h0 - inv2s2 * self.sq_dist[:, plan.k_first]
        integral = np.zeros(self.mesh.size)
        dead_width = 0.0
        for gap in plan.gaps:
            a = np.exp(-beta * gap.dts)
            live = a >= MEMORY_DEAD_WEIGHT
            n_live = int(np.count_nonzero(live))
            dead_width += gap.width * (a.size - n_live)
            if n_live:
                al = np.ascontiguousarray(a[live])
                v = np.maximum(sigma2 * (1.0 - al * al), sigma2 * VARIANCE_FLOOR_REL)
                w = np.full(n_live, gap.width)
                zsx, zsy = self._zx[gap.k_prev], self._zy[gap.k_prev]
                _kernels.gap_hazard_integral(self._sx, self._sy, self._zx, self._zy,
                                             zsx, zsy, al, v, w, h0, integral)
            if gap.k_cur >= 0:
                logf += self._log_capture_hazard(params, gap)
        logf -= integral
        if dead_width > 0.0:
            logf -= dead_width * hn_dot
        return logf

    def _log_capture_hazard(self, params: ModelParams, gap: _Gap) -> np.ndarray:
        """Log memory hazard at the captured trap, per mesh point."""
        dt = gap.t_cur - gap.t_prev
        a = math.exp(-params.beta * dt)
        log_h0 = math.log(params.h0)
        if a < MEMORY_DEAD_WEIGHT:
            return log_h0 - self.sq_dist[:, gap.k_cur] / (2.0 * params.sigma2)
        v = max(params.sigma2 * (1.0 - a * a), params.sigma2 * VARIANCE_FLOOR_REL)
        mux = a * self._zx[gap.k_prev] + (1.0 - a) * self._sx
        muy = a * self._zy[gap.k_prev] + (1.0 - a) * self._sy
        dx = self._zx[gap.k_cur] - mux
        dy = self._zy[gap.k_cur] - muy
        return log_h0 - (dx * dx + dy * dy) / (2.0 * v)

    def log_density_given_centers(self, params: ModelParams, index: int) -> np.ndarray:
        """Per-mesh-point log conditional density for one individual."""
        _, hn_dot = self._limiting_pack(params)
        return self._log_density_vector(params, self.plans[index], hn_dot)

    def log_marginal_histories(self, params: ModelParams) -> np.ndarray:
        """Log marginal density of every history under the uniform prior."""
        _, hn_dot = self._limiting_pack(params)
        out = np.empty(len(self.plans))
        for i, plan in enumerate(self.plans):
            logf = self._log_density_vector(params, plan, hn_dot)
            out[i] = _logsumexp(logf) + self._log_cell_over_area
        return out

    def nll(self, params: ModelParams) -> float:
        if self.dataset.n_individuals < 1:
            raise DataError("the likelihood requires at least one observed individual")
        log_p = self.log_detect_prob(params)
        log_f = self.log_marginal_histories(params)
        if not np.all(np.isfinite(log_f)) or not np.isfinite(log_p):
            return math.inf
        return float(-log_f.sum() + len(log_f) * log_p)


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if not np.isfinite(m):
        return -math.inf if m < 0 else m
    return m + math.log(float(np.sum(np.exp(v - m))))
