"""Model fitting, abundance estimation, and activity-center surfaces.

Fitting maximizes the conditional likelihood over log-transformed hazard
parameters (positivity becomes unconstrained) with a Nelder-Mead stage
followed by a BFGS polish driven by central finite-difference gradients.
Abundance then comes from the Horvitz-Thompson step N = n / p(theta_hat),
with its variance split into a delta-method term through the parameter
covariance and a binomial term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import DataError, DomainError, InitializationError, NumericalError
from .geometry import SpatialMesh, SurveyWindow, TrapArray
from .hazard import MSCR, SCR, ModelParams
from .likelihood import CaptureHistory, Dataset, LikelihoodEvaluator, detect_prob

# central-difference steps on the log-parameter scale; quadrature noise in
# the objective makes tighter steps unreliable
GRAD_STEP = 1e-4
HESS_STEP = 1e-3
GRAD_TOL = 1e-4

_PARAM_NAMES = {MSCR: ("h0", "sigma2", "beta"), SCR: ("h0", "sigma2")}


@dataclass
class FitResult:
    """Fitted parameters, covariance, abundance, and quadrature settings."""

    kind: str
    params_hat: ModelParams
    loglik: float
    aic: float
    n_observed: int
    p_hat: float
    N_hat: float
    var_N: float
    ci_N: tuple[float, float]
    se_params: dict[str, float] | None
    ci_params: dict[str, tuple[float, float]] | None
    cov_log_params: np.ndarray | None
    converged: bool
    var_N_partial: bool
    max_abs_gradient: float
    quadrature: dict
    init: ModelParams
    metadata: dict = field(default_factory=dict)

    @property
    def se_N(self) -> float:
        return math.sqrt(self.var_N)

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self.kind]

    def to_dict(self) -> dict:
        cov = None if self.cov_log_params is None else \
            [list(map(float, row)) for row in self.cov_log_params]
        return {
            "kind": self.kind,
            "params_hat": _params_dict(self.params_hat),
            "loglik": self.loglik,
            "aic": self.aic,
            "n_observed": self.n_observed,
            "p_hat": self.p_hat,
            "N_hat": self.N_hat,
            "var_N": self.var_N,
            "se_N": self.se_N,
            "ci_N": list(self.ci_N),
            "se_params": self.se_params,
            "ci_params": None if self.ci_params is None else
                {k: list(v) for k, v in self.ci_params.items()},
            "cov_log_params": cov,
            "converged": self.converged,
            "var_N_partial": self.var_N_partial,
            "max_abs_gradient": self.max_abs_gradient,
            "quadrature": self.quadrature,
            "init": _params_dict(self.init),
            "metadata": self.metadata,
        }


def _params_dict(p: ModelParams) -> dict:
    return {"kind": p.kind, "h0": p.h0, "sigma2": p.sigma2, "beta": p.beta}


def aic_value(loglik: float, kind: str) -> float:
    """AIC with k = 3 (SCR) or 4 (MSCR): hazard parameters plus the
    Horvitz-Thompson abundance step."""
    k = 4 if kind == MSCR else 3
    return 2.0 * k - 2.0 * loglik


def ht_abundance(n: int, p_hat: float) -> float:
    """Horvitz-Thompson abundance n / p_hat."""
    if not (0.0 < p_hat <= 1.0):
        raise DomainError(f"p_hat must be in (0, 1], got {p_hat}")
    if n == 0:
        warnings.warn("no observed individuals; abundance estimate is 0")
        return 0.0
    return n / p_hat


def ht_variance(n: int, params_hat: ModelParams,
                cov_log_params: np.ndarray | None, mesh: SpatialMesh,
                traps: TrapArray, window: SurveyWindow) -> float:
    """Variance of the Horvitz-Thompson abundance estimate.

    Sum of a delta-method quadratic form (gradient of n / p(theta) over
    log-parameters by central differences) and the binomial term
    n (1 - p) / p^2. With no covariance available only the binomial term
    is returned; callers should flag the result as partial.
    """
    p_hat = detect_prob(params_hat, traps, mesh, window)
    binom = n * (1.0 - p_hat) / p_hat ** 2
    if cov_log_params is None:
        return binom
    names = _PARAM_NAMES[params_hat.kind]
    x = _log_vector(params_hat)
    grad = np.empty(len(names))
    for j in range(len(names)):
        step = np.zeros_like(x)
        step[j] = GRAD_STEP
        p_plus = detect_prob(_params_from_log(x + step, params_hat.kind), traps, mesh, window)
        p_minus = detect_prob(_params_from_log(x - step, params_hat.kind), traps, mesh, window)
        grad[j] = (n / p_plus - n / p_minus) / (2.0 * GRAD_STEP)
    delta = float(grad @ cov_log_params @ grad)
    return delta + binom


def lognormal_ci_N(N_hat: float, var_N: float, level: float = 0.95) -> tuple[float, float]:
    """Log-normal confidence interval (N/C, N*C) with
    C = exp(z * sqrt(log(1 + var / N^2)))."""
    if N_hat <= 0:
        raise DomainError("N_hat must be positive")
    if var_N < 0:
        raise DomainError("var_N must be non-negative")
    if var_N == 0.0:
        return (N_hat, N_hat)
    z = norm.ppf(0.5 + level / 2.0)
    C = math.exp(z * math.sqrt(math.log1p(var_N / N_hat ** 2)))
    return (N_hat / C, N_hat * C)


def wald_ci_N(N_hat: float, var_N: float, level: float = 0.95) -> tuple[float, float]:
    """Symmetric Wald interval for N, for side-by-side coverage reporting."""
    z = norm.ppf(0.5 + level / 2.0)
    half = z * math.sqrt(max(var_N, 0.0))
    return (N_hat - half, N_hat + half)


def default_init(dataset: Dataset, kind: str) -> ModelParams:
    """Scale-aware starting values.

    h0: detections per individual-day. sigma2: mean squared distance of
    each individual's detection locations to their centroid, falling back
    to 0.1 * (trap span)^2 when every history sits on a single trap.
    beta: 1 per day.
    """
    T = dataset.window.duration
    n = dataset.n_individuals
    total = dataset.n_detections
    h0 = max(total / (n * T), 1e-6)
    msds = []
    for h in dataset.histories:
        locs = dataset.traps.xy[h.trap_indices]
        centroid = locs.mean(axis=0)
        msds.append(float(np.mean(np.sum((locs - centroid) ** 2, axis=1))))
    sigma2 = float(np.mean(msds))
    # single-trap histories leave only centroid rounding noise (~1e-31);
    # anything below a few centimetres squared is degenerate
    if sigma2 < 1e-9:
        xmin, xmax, ymin, ymax = dataset.traps.bounding_box()
        span = max(xmax - xmin, ymax - ymin, 1.0)
        sigma2 = 0.1 * span ** 2
    return ModelParams(h0=h0, sigma2=sigma2,
                       beta=1.0 if kind == MSCR else None, kind=kind)


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def _log_vector(params: ModelParams) -> np.ndarray:
    vals = [params.h0, params.sigma2] + ([params.beta] if params.kind == MSCR else [])
    return np.log(np.asarray(vals, dtype=float))


def _params_from_log(x: np.ndarray, kind: str) -> ModelParams:
    vals = np.exp(x)
    beta = float(vals[2]) if kind == MSCR else None
    return ModelParams(h0=float(vals[0]), sigma2=float(vals[1]), beta=beta, kind=kind)


def _fd_gradient(f, x: np.ndarray, step: float = GRAD_STEP) -> np.ndarray:
    g = np.empty(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        g[j] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g

def _fd_hessian(f, x: np.ndarray, step: float = HESS_STEP) -> np.ndarray:
    p = x.size
    H = np.empty((p, p))
    f0 = f(x)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = step
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / step ** 2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = step
            hij = (f(x + ei + ej) - f(x + ei - ej)
                   - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * step ** 2)
            H[i, j] = H[j, i] = hij
    return H


def _set_threads(workers):
    import numba
    current = numba.get_num_threads()
    if workers is not None:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))
    return current


def fit(dataset: Dataset, kind: str, mesh: SpatialMesh, B: int,
        init: ModelParams | None = None, presolve: bool = True,
        workers: int | None = None) -> FitResult:
    """Fit one model kind and apply the Horvitz-Thompson abundance step.

    A capped Nelder-Mead stage (warm-started on a coarsened mesh and
    reduced B when `presolve` is set) is followed by a BFGS polish with
    central-difference gradients on the full quadrature. The covariance of
    the log-parameters is the inverse finite-difference Hessian at the
    optimum; if that Hessian is not positive definite the fit is reported
    with converged=False and no covariance rather than raising.
    """
    if dataset.n_individuals < 1:
        raise DataError("cannot fit an empty dataset")
    if kind not in (MSCR, SCR):
        raise DataError(f"unknown model kind: {kind!r}")
    if kind == MSCR and not any(h.n_detections >= 2 for h in dataset.histories):
        warnings.warn("no individual was detected twice; the memory rate "
                      "beta is weakly identified")
    if init is not None and init.kind != kind:
        init = ModelParams(h0=init.h0, sigma2=init.sigma2,
                           beta=init.beta if kind == MSCR else None, kind=kind)
    init = init or default_init(dataset, kind)

    evaluator = LikelihoodEvaluator(dataset, mesh, B)
    objective = _CountingObjective(evaluator, kind)
    x0 = _log_vector(init)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise InitializationError(
            f"objective not finite at the starting point {_params_dict(init)}; "
            "supply an explicit init closer to plausible rates")

    prev_threads = _set_threads(workers)
    try:
        if presolve and mesh.size > 200:
            coarse = LikelihoodEvaluator(dataset, mesh.coarsened(2), max(10, B // 4))
            pre = minimize(_CountingObjective(coarse, kind), x0, method="Nelder-Mead",
                           options={"maxfev": 400, "xatol": 1e-3, "fatol": 1e-6,
                                    "adaptive": True})
            if np.isfinite(objective(pre.x)):
                x0 = pre.x
        nm = minimize(objective, x0, method="Nelder-Mead",
                      options={"maxfev": 200 if presolve else 600,
                               "xatol": 1e-4, "fatol": 1e-8, "adaptive": True})
        best_x, best_f = (nm.x, nm.fun) if nm.fun <= f0 else (x0, f0)
        best_x, best_f = _polish(objective, best_x, best_f)
        grad = _fd_gradient(objective, best_x)
        if np.max(np.abs(grad)) >= GRAD_TOL:
            nm2 = minimize(objective, best_x, method="Nelder-Mead",
                           options={"maxfev": 400, "xatol": 1e-6, "fatol": 1e-10,
                                    "adaptive": True})
            if nm2.fun < best_f:
                best_x, best_f = nm2.x, nm2.fun
            best_x, best_f = _polish(objective, best_x, best_f)
            grad = _fd_gradient(objective, best_x)
        hess = _fd_hessian(objective, best_x)
    finally:
        _set_threads(prev_threads)

    max_grad = float(np.max(np.abs(grad)))
    cov = _invert_if_pd(hess)
    converged = bool(np.isfinite(best_f) and cov is not None and max_grad < GRAD_TOL)

    params_hat = _params_from_log(best_x, kind)
    names = _PARAM_NAMES[kind]
    theta = np.exp(best_x)
    if cov is not None:
        log_se = np.sqrt(np.diag(cov))
        se_params = {nm_: float(theta[j] * log_se[j]) for j, nm_ in enumerate(names)}
        z = norm.ppf(0.975)
        ci_params = {nm_: (float(math.exp(best_x[j] - z * log_se[j])),
                           float(math.exp(best_x[j] + z * log_se[j])))
                     for j, nm_ in enumerate(names)}
    else:
        se_params = None
        ci_params = None

    n = dataset.n_individuals
    p_hat = math.exp(evaluator.log_detect_prob(params_hat))
    N_hat = ht_abundance(n, p_hat)
    var_N = ht_variance(n, params_hat, cov, mesh, dataset.traps, dataset.window)
    loglik = -best_f
    return FitResult(
        kind=kind,
        params_hat=params_hat,
        loglik=float(loglik),
        aic=aic_value(loglik, kind),
        n_observed=n,
        p_hat=float(p_hat),
        N_hat=float(N_hat),
        var_N=float(var_N),
        ci_N=lognormal_ci_N(N_hat, var_N),
        se_params=se_params,
        ci_params=ci_params,
        cov_log_params=cov,
        converged=converged,
        var_N_partial=cov is None,
        max_abs_gradient=max_grad,
        quadrature={"B": int(B), "mesh_spacing": mesh.spacing,
                    "mesh_points": mesh.size, "mesh_area": mesh.total_area},
        init=init,
        metadata={
            "optimizer": "nelder-mead stage + bfgs polish, central-difference gradients",
            "objective_evaluations": objective.count,
            "gradient_step_log_scale": GRAD_STEP,
            "hessian_step_log_scale": HESS_STEP,
            "ci_method_N": "lognormal",
            "ci_method_params": "wald on the log scale (assumed form)",
        },
    )


class _CountingObjective:
    def __init__(self, evaluator: LikelihoodEvaluator, kind: str):
        self.evaluator = evaluator
        self.kind = kind
        self.count = 0

    def __call__(self, x: np.ndarray) -> float:
        self.count += 1
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 50):
            return math.inf
        return self.evaluator.nll(_params_from_log(x, self.kind))


def _polish(objective, x: np.ndarray, fx: float):
    res = minimize(objective, x, method="BFGS",
                   jac=lambda y: _fd_gradient(objective, y),
                   options={"gtol": 1e-6, "maxiter": 80})
    if np.isfinite(res.fun) and res.fun <= fx:
        return res.x, float(res.fun)
    return x, fx


def _invert_if_pd(H: np.ndarray) -> np.ndarray | None:
    if not np.all(np.isfinite(H)):
        return None
    eigval, eigvec = np.linalg.eigh(0.5 * (H + H.T))
    if np.any(eigval <= 0):
        return None
    return (eigvec / eigval) @ eigvec.T


# ---------------------------------------------------------------------------
# activity-center surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcSurface:
    """Posterior density of one individual's activity center on the mesh."""

    individual_id: str
    mesh: SpatialMesh
    density: np.ndarray      # (M,) 1/km^2, integrates to 1 over the mesh
    mode_index: int
    mode_xy: tuple[float, float]

    @property
    def normalization(self) -> float:
        return float(self.density.sum() * self.mesh.cell_area)


def ac_surface(history: CaptureHistory, params_hat: ModelParams,
               mesh: SpatialMesh, traps: TrapArray, window: SurveyWindow,
               B: int) -> AcSurface:
    """Activity-center density: conditional history density per mesh point,
    normalized to integrate to one; the mode is the argmax mesh point (ties
    broken by the lowest point index)."""
    ds = Dataset(histories=(history,), traps=traps, window=window)
    ev = LikelihoodEvaluator(ds, mesh, B)
    logf = ev.log_density_given_centers(params_hat, 0)
    peak = float(np.max(logf))
    if not np.isfinite(peak):
        raise NumericalError(
            f"activity-center surface for {history.individual_id!r} underflowed "
            f"everywhere (max log density {peak}); the fitted hazard rates are "
            "incompatible with this history")
    w = np.exp(logf - peak)
    density = w / (w.sum() * mesh.cell_area)
    mode_index = int(np.argmax(logf))
    mode_xy = (float(mesh.points[mode_index, 0]), float(mesh.points[mode_index, 1]))
    return AcSurface(individual_id=history.individual_id, mesh=mesh,
                     density=density, mode_index=mode_index, mode_xy=mode_xy)
