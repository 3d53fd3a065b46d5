"""Synthetic capture data and replicated simulation studies.

Two generators: one draws detections directly from the memory hazard
process on a fine time discretization, the other moves individuals with a
discrete-time Ornstein-Uhlenbeck kernel and records a capture whenever a
position falls inside a trap's detection radius.

Randomness is split into one substream per individual (spawned from the
dataset seed) and one derived seed per replicate, so results never depend
on scheduling or worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import multiprocessing

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError
from .geometry import SurveyWindow, TrapArray, build_mesh, region_from_traps
from .hazard import MSCR, SCR, VARIANCE_FLOOR_REL
from .inference import FitResult, fit, wald_ci_N
from .likelihood import CaptureHistory, Dataset

_BLOCK = 2048  # fine intervals evaluated per vectorized chunk


@dataclass(frozen=True)
class SimMscrConfig:
    """Generative settings for the hazard-process simulator.

    Hazard values are plain floats (h0 = 0 is allowed and produces an empty
    dataset); `kind` selects the memory or memoryless hazard.
    """

    n_individuals: int
    h0: float
    sigma2: float
    beta: float | None
    T: float
    seed: int
    traps: TrapArray
    buffer: float = 2.0
    step: float = 1.0 / 1440.0  # days; 1-minute default keeps the
    kind: str = MSCR            # discretization effect under ~2%

    def __post_init__(self):
        if self.step <= 0 or self.step >= self.T:
            raise ConfigurationError("step must satisfy 0 < step < T")
        if self.n_individuals < 0:
            raise ConfigurationError("n_individuals must be >= 0")
        if self.h0 < 0 or self.sigma2 <= 0:
            raise ConfigurationError("h0 must be >= 0 and sigma2 > 0")
        if self.kind == MSCR and (self.beta is None or self.beta <= 0):
            raise ConfigurationError("memory simulation requires beta > 0")

    @property
    def region(self) -> tuple[float, float, float, float]:
        return region_from_traps(self.traps, self.buffer)


@dataclass(frozen=True)
class SimOuConfig:
    """Settings for the Ornstein-Uhlenbeck movement simulator."""

    n_individuals: int
    sigma2: float
    beta: float
    T: float
    seed: int
    traps: TrapArray
    buffer: float = 2.0
    step: float = 10.0 / 1440.0   # movement cadence, days
    detect_radius: float = 0.05   # km

    def __post_init__(self):
        if self.step <= 0 or self.step >= self.T:
            raise ConfigurationError("step must satisfy 0 < step < T")
        if self.detect_radius < 0:
            raise ConfigurationError("detect_radius must be >= 0")
        if self.sigma2 <= 0 or self.beta <= 0:
            raise ConfigurationError("sigma2 and beta must be > 0")

    @property
    def region(self) -> tuple[float, float, float, float]:
        return region_from_traps(self.traps, self.buffer)


@dataclass(frozen=True)
class SimulatedData:
    """Simulated dataset plus the generating truth."""

    dataset: Dataset
    activity_centers: np.ndarray  # (N_true, 2), every individual
    observed: np.ndarray          # (N_true,) bool
    trajectories: tuple | None = None  # OU simulator only

    @property
    def n_true(self) -> int:
        return self.activity_centers.shape[0]

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())


def _individual_id(i: int) -> str:
    return f"ind{i + 1:03d}"


def simulate_mscr(config: SimMscrConfig) -> SimulatedData:
    """Draw capture histories directly from the detection hazard process.

    The survey time is discretized into fine intervals; within each, a
    capture occurs with probability 1 - exp(-h.(midpoint) * step) under the
    individual's current memory state. On capture the time is the interval
    end point, the trap is drawn proportionally to the per-trap hazards,
    and the memory state is updated.
    """
    n_int = int(round(config.T / config.step))
    children = np.random.SeedSequence(config.seed).spawn(max(config.n_individuals, 1))
    centers = np.zeros((config.n_individuals, 2))
    histories = []
    observed = np.zeros(config.n_individuals, dtype=bool)
    xmin, xmax, ymin, ymax = config.region
    traps_xy = config.traps.xy
    window = SurveyWindow(t_end=config.T)
    for i in range(config.n_individuals):
        rng = np.random.default_rng(children[i])
        s = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        centers[i] = s
        caps = _walk_hazard(rng, s, traps_xy, config, n_int)
        if caps:
            observed[i] = True
            times = np.array([t for t, _ in caps])
            # a capture in the final interval lands on T; nudge it inside
            times = np.minimum(times, np.nextafter(config.T, 0.0))
            histories.append(CaptureHistory(
                individual_id=_individual_id(i),
                times=times,
                trap_indices=np.array([k for _, k in caps], dtype=np.intp)))
    dataset = Dataset(histories=tuple(histories), traps=config.traps, window=window)
    return SimulatedData(dataset=dataset, activity_centers=centers, observed=observed)


def _walk_hazard(rng, s, traps_xy, config: SimMscrConfig, n_int: int):
    """One individual's Bernoulli walk over the fine intervals."""
    h0, sigma2, beta, step = config.h0, config.sigma2, config.beta, config.step
    if h0 == 0.0:
        return []
    caps = []
    zstar = None
    tstar = 0.0
    memory = config.kind == MSCR
    hn_k = h0 * np.exp(-((traps_xy - s) ** 2).sum(axis=1) / (2.0 * sigma2))
    i = 0
    while i < n_int:
        j = min(i + _BLOCK, n_int)
        mids = (np.arange(i, j) + 0.5) * step
        if memory and zstar is not None:
            a = np.exp(-beta * (mids - tstar))
            v = np.maximum(sigma2 * (1.0 - a * a), sigma2 * VARIANCE_FLOOR_REL)
            mu = a[:, None] * zstar[None, :] + (1.0 - a)[:, None] * s[None, :]
            d2 = ((traps_xy[None, :, :] - mu[:, None, :]) ** 2).sum(axis=2)
            hmat = h0 * np.exp(-d2 / (2.0 * v)[:, None])
            hdot = hmat.sum(axis=1)
        else:
            hmat = None
            hdot = np.full(j - i, hn_k.sum())
        p = -np.expm1(-hdot * step)
        hit = np.nonzero(rng.random(j - i) < p)[0]
        if hit.size == 0:
            i = j
            continue
        b = int(hit[0])
        weights = hn_k if hmat is None else hmat[b]
        k = int(rng.choice(traps_xy.shape[0], p=weights / weights.sum()))
        t_cap = (i + b + 1) * step
        caps.append((t_cap, k))
        zstar = traps_xy[k]
        tstar = t_cap
        i = i + b + 1
    return caps


def simulate_ou(config: SimOuConfig) -> SimulatedData:
    """Thin Ornstein-Uhlenbeck movement paths through trap detection zones.

    Each individual starts at its activity center and moves with the exact
    discrete-time OU kernel; any position within `detect_radius` of a trap
    is a capture at the nearest such trap (ties to the lowest index).
    """
    n_steps = int(round(config.T / config.step))
    a = math.exp(-config.beta * config.step)
    sd = math.sqrt(config.sigma2 * (1.0 - a * a))
    children = np.random.SeedSequence(config.seed).spawn(max(config.n_individuals, 1))
    xmin, xmax, ymin, ymax = config.region
    traps_xy = config.traps.xy
    centers = np.zeros((config.n_individuals, 2))
    observed = np.zeros(config.n_individuals, dtype=bool)
    histories = []
    trajectories = []
    window = SurveyWindow(t_end=config.T)
    step_times = np.minimum((np.arange(n_steps) + 1) * config.step,
                            np.nextafter(config.T, 0.0))
    for i in range(config.n_individuals):
        rng = np.random.default_rng(children[i])
        s = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        centers[i] = s
        noise = rng.normal(0.0, sd, size=(n_steps, 2))
        drive = (1.0 - a) * s[None, :] + noise
        # AR(1) scan: x_t = a x_{t-1} + drive_t, x_0 = s
        x, _ = lfilter([1.0], [1.0, -a], drive, axis=0, zi=(a * s)[None, :])
        trajectories.append(np.vstack([s[None, :], x]))
        d2 = ((x[:, None, :] - traps_xy[None, :, :]) ** 2).sum(axis=2)  # (steps, K)
        nearest = d2.argmin(axis=1)
        hit = d2[np.arange(n_steps), nearest] < config.detect_radius ** 2
        idx = np.nonzero(hit)[0]
        if idx.size:
            observed[i] = True
            histories.append(CaptureHistory(
                individual_id=_individual_id(i),
                times=step_times[idx],
                trap_indices=nearest[idx].astype(np.intp)))
    dataset = Dataset(histories=tuple(histories), traps=config.traps, window=window)
    return SimulatedData(dataset=dataset, activity_centers=centers,
                         observed=observed, trajectories=tuple(trajectories))


# ---------------------------------------------------------------------------
# replicated simulation studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    """A simulation study: one generator, one or more model kinds to fit."""

    simulator: str  # "mscr" | "ou"
    sim_mscr: SimMscrConfig | None = None
    sim_ou: SimOuConfig | None = None
    kinds: tuple[str, ...] = (MSCR, SCR)
    spacing: float = 0.3
    B: int = 100
    fit_buffer: float | None = None  # defaults to the simulator buffer

    def __post_init__(self):
        if self.simulator not in ("mscr", "ou"):
            raise ConfigurationError("simulator must be 'mscr' or 'ou'")
        if self.simulator == "mscr" and self.sim_mscr is None:
            raise ConfigurationError("sim_mscr settings required")
        if self.simulator == "ou" and self.sim_ou is None:
            raise ConfigurationError("sim_ou settings required")
        for kind in self.kinds:
            if kind not in (MSCR, SCR):
                raise ConfigurationError(f"unknown model kind {kind!r}")

    @property
    def sim(self):
        return self.sim_mscr if self.simulator == "mscr" else self.sim_ou

    @property
    def seed(self) -> int:
        return self.sim.seed

    def truth(self) -> dict[str, dict[str, float]]:
        """Per-kind truth values; parameters are only comparable for the
        kind that generated the data, while N is always comparable."""
        N = float(self.sim.n_individuals)
        out = {kind: {"N": N} for kind in self.kinds}
        if self.simulator == "mscr":
            sim = self.sim_mscr
            if sim.kind in out:
                out[sim.kind].update({"h0": sim.h0, "sigma2": sim.sigma2})
                if sim.kind == MSCR:
                    out[sim.kind]["beta"] = sim.beta
        return out


@dataclass
class StudyRow:
    kind: str
    parameter: str
    truth: float | None
    mean_estimate: float
    mean_se: float
    pct_bias: float | None
    mean_ci_width: float
    pct_coverage: float | None
    rmse: float | None
    pct_coverage_wald: float | None = None  # N only

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SimStudyReport:
    config: dict
    replicates: int
    rows: list[StudyRow]
    failures: dict[str, list[dict]]
    replicate_results: list[dict]
    runtime: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "replicates": self.replicates,
            "rows": [r.to_dict() for r in self.rows],
            "failures": self.failures,
            "replicate_results": self.replicate_results,
            "runtime": self.runtime,
        }

    def row(self, kind: str, parameter: str) -> StudyRow:
        for r in self.rows:
            if r.kind == kind and r.parameter == parameter:
                return r
        raise KeyError((kind, parameter))

    def text_table(self) -> str:
        header = ["Model", "Parameter", "Truth", "Estimate (SE)", "% Bias",
                  "95% CI Width", "% Coverage", "RMSE"]
        lines = [header]
        for r in self.rows:
            lines.append([
                r.kind,
                r.parameter,
                "--" if r.truth is None else f"{r.truth:g}",
                f"{r.mean_estimate:.2f} ({r.mean_se:.2f})",
                "--" if r.pct_bias is None else f"{r.pct_bias:.1f}",
                f"{r.mean_ci_width:.2f}",
                "--" if r.pct_coverage is None else f"{r.pct_coverage:.0f}",
                "--" if r.rmse is None else f"{r.rmse:.2f}",
            ])
        widths = [max(len(row[c]) for row in lines) for c in range(len(header))]
        out = []
        for row in lines:
            out.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        return "\n".join(out) + "\n"


def replicate_seeds(seed: int, replicates: int) -> np.ndarray:
    """Derived 64-bit seed per replicate; each replicate can be reproduced
    standalone by passing its seed to the matching simulate call."""
    return np.random.SeedSequence(seed).generate_state(replicates, dtype=np.uint64)


def _simulate_for(study: StudyConfig, rep_seed: int) -> SimulatedData:
    if study.simulator == "mscr":
        return simulate_mscr(replace(study.sim_mscr, seed=int(rep_seed)))
    return simulate_ou(replace(study.sim_ou, seed=int(rep_seed)))


def run_replicate(study: StudyConfig, index: int, rep_seed: int) -> dict:
    """Simulate one dataset and fit every requested kind. Never raises for
    per-kind numerical trouble; failures are recorded in the result."""
    sim = _simulate_for(study, rep_seed)
    buffer = study.fit_buffer if study.fit_buffer is not None else study.sim.buffer
    result = {
        "index": index,
        "seed": int(rep_seed),
        "sim": {
            "n_observed": sim.n_observed,
            "n_detections": sim.dataset.n_detections,
        },
        "fits": {},
    }
    if sim.n_observed == 0:
        for kind in study.kinds:
            result["fits"][kind] = {"error": "empty dataset: no observed individuals"}
        return result
    mesh = build_mesh(sim.dataset.traps, buffer, study.spacing)
    for kind in study.kinds:
        try:
            with np.errstate(over="ignore"):
                fr = fit(sim.dataset, kind, mesh, study.B, workers=1)
            result["fits"][kind] = _fit_summary(fr)
        except Exception as exc:  # per-replicate failures never abort a study
            result["fits"][kind] = {"error": f"{type(exc).__name__}: {exc}"}
    return result


def _fit_summary(fr: FitResult) -> dict:
    est = {"N": fr.N_hat, "h0": fr.params_hat.h0, "sigma2": fr.params_hat.sigma2}
    se = {"N": fr.se_N}
    ci = {"N": list(fr.ci_N)}
    if fr.kind == MSCR:
        est["beta"] = fr.params_hat.beta
    if fr.se_params is not None:
        se.update(fr.se_params)
    if fr.ci_params is not None:
        ci.update({k: list(v) for k, v in fr.ci_params.items()})
    return {
        "converged": fr.converged,
        "estimates": est,
        "se": se,
        "ci": ci,
        "ci_N_wald": list(wald_ci_N(fr.N_hat, fr.var_N)),
        "loglik": fr.loglik,
        "aic": fr.aic,
        "n_observed": fr.n_observed,
        "max_abs_gradient": fr.max_abs_gradient,
    }


def _worker(payload):
    study, index, rep_seed = payload
    return run_replicate(study, index, int(rep_seed))


def _tick(progress: bool, done: int, total: int, start: float) -> None:
    if progress:
        import sys
        elapsed = time.perf_counter() - start
        print(f"replicate {done}/{total} done ({elapsed:.0f}s elapsed)",
              file=sys.stderr, flush=True)


def run_sim_study(study: StudyConfig, replicates: int, workers: int = 1,
                  progress: bool = False) -> SimStudyReport:
    """Replicate the simulate-and-fit pipeline and aggregate the usual
    study metrics (% bias, CI width, % coverage, RMSE) per kind/parameter.

    Replicates that fail or do not converge are excluded from aggregates
    and reported under `failures`. Results are independent of `workers`.
    With workers > 1 the pool uses spawned processes, so script callers
    need the usual ``if __name__ == "__main__"`` guard.
    """
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    seeds = replicate_seeds(study.seed, replicates)
    payloads = [(study, i, seeds[i]) for i in range(replicates)]
    start = time.perf_counter()
    results = []
    if workers <= 1:
        for p in payloads:
            results.append(_worker(p))
            _tick(progress, len(results), replicates, start)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            for res in pool.map(_worker, payloads, chunksize=1):
                results.append(res)
                _tick(progress, len(results), replicates, start)
    wall = time.perf_counter() - start
    rows, failures = _aggregate(study, results)
    return SimStudyReport(
        config=_study_config_dict(study),
        replicates=replicates,
        rows=rows,
        failures=failures,
        replicate_results=results,
        runtime={"workers": int(workers), "wall_time_s": wall},
    )


def _aggregate(study: StudyConfig, results: list[dict]):
    truth_map = study.truth()
    rows: list[StudyRow] = []
    failures: dict[str, list[dict]] = {kind: [] for kind in study.kinds}
    for kind in study.kinds:
        ok = []
        for res in results:
            frs = res["fits"].get(kind, {})
            if "error" in frs:
                failures[kind].append({"index": res["index"], "reason": frs["error"]})
            elif not frs.get("converged", False):
                failures[kind].append({"index": res["index"], "reason": "not converged"})
            else:
                ok.append(frs)
        params = ["N", "h0", "sigma2"] + (["beta"] if kind == MSCR else [])
        for pname in params:
            if not ok:
                rows.append(StudyRow(kind=kind, parameter=pname, truth=None,
                                     mean_estimate=math.nan, mean_se=math.nan,
                                     pct_bias=None, mean_ci_width=math.nan,
                                     pct_coverage=None, rmse=None))
                continue
            est = np.array([f["estimates"][pname] for f in ok])
            se = np.array([f["se"][pname] for f in ok])
            ci = np.array([f["ci"][pname] for f in ok])
            truth = truth_map.get(kind, {}).get(pname)
            width = ci[:, 1] - ci[:, 0]
            if truth is None:
                bias = cover = rmse = None
            else:
                bias = float(100.0 * (est.mean() - truth) / truth)
                cover = float(100.0 * np.mean((ci[:, 0] <= truth) & (truth <= ci[:, 1])))
                rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
            row = StudyRow(kind=kind, parameter=pname, truth=truth,
                           mean_estimate=float(est.mean()), mean_se=float(se.mean()),
                           pct_bias=bias, mean_ci_width=float(width.mean()),
                           pct_coverage=cover, rmse=rmse)
            if pname == "N" and truth is not None:
                wald = np.array([f["ci_N_wald"] for f in ok])
                row.pct_coverage_wald = float(
                    100.0 * np.mean((wald[:, 0] <= truth) & (truth <= wald[:, 1])))
            rows.append(row)
    return rows, failures


def _study_config_dict(study: StudyConfig) -> dict:
    sim = study.sim
    sim_dict = {
        "n_individuals": sim.n_individuals,
        "T": sim.T,
        "seed": sim.seed,
        "buffer": sim.buffer,
        "step": sim.step,
        "traps": {"ids": list(sim.traps.ids),
                  "xy": [list(map(float, p)) for p in sim.traps.xy]},
    }
    if study.simulator == "mscr":
        sim_dict.update({"h0": sim.h0, "sigma2": sim.sigma2, "beta": sim.beta,
                         "kind": sim.kind})
    else:
        sim_dict.update({"sigma2": sim.sigma2, "beta": sim.beta,
                         "detect_radius": sim.detect_radius})
    return {
        "simulator": study.simulator,
        "sim": sim_dict,
        "kinds": list(study.kinds),
        "spacing": study.spacing,
        "B": study.B,
    }
