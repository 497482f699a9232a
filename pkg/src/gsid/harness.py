"""Monte Carlo experiment runner and convergence diagnostics.

Ensembles simulate many seeded closed-loop runs, estimate on each, and
aggregate estimation-error quantiles at fixed checkpoints.  A log-log fit of
the median error against time gives the empirical convergence exponent to
compare with the schedule-implied rate, and a law-of-iterated-logarithm ratio
diagnoses whether the noise-variance fluctuations behave like those of a
square-integrable martingale.
"""

from __future__ import annotations

import gzip
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .estimator import (EstimateRecord, EstimatorConfig, ResidualData, SigmaScenario,
                        run_estimation)
from .models import DeadZone, SystemSpec
from .inputs import ZeroInput
from .noise import NoiseSpec, uniform_symmetric
from .simulate import Trajectory, simulate
from .validation import check_finite_array, require

__all__ = [
    "EnsembleConfig", "EnsembleResult", "run_ensemble", "RateFit", "fit_rate",
    "VarianceDiagnostic", "variance_diagnostic", "CounterexampleReport",
    "counterexample_demo", "write_summary_csv", "write_runs_jsonl", "is_stable",
]

STABILITY_MEAN_SQUARE_CAP = 1e3
RATE_FIT_MIN_TIME = 256
RATE_FIT_MIN_POINTS = 4
LIL_FLAG_RATIO = 1.5


def is_stable(traj: Trajectory, cap: float = STABILITY_MEAN_SQUARE_CAP) -> bool:
    """Running mean-square screen: max_t (sum_{i<=t} y_i^2) / t <= cap."""
    if not traj.stable:
        return False
    y2 = np.cumsum(traj.y ** 2)
    t = np.arange(1, traj.T + 1, dtype=float)
    return bool((y2 / t).max() <= cap)


@dataclass(frozen=True)
class EnsembleConfig:
    """A seeded family of identical experiments differing only in the noise draw."""

    spec: SystemSpec
    noise: NoiseSpec
    estimator: EstimatorConfig
    true_theta: np.ndarray
    policy: object = field(default_factory=ZeroInput)
    y_init: np.ndarray | None = None
    base_seed: int = 0
    num_runs: int = 1
    T_max: int = 1024
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self):
        require(self.num_runs >= 1, "num_runs must be >= 1")
        require(self.T_max >= 2, "T_max must be >= 2")
        theta = check_finite_array(self.true_theta, "true_theta").reshape(self.spec.n)
        object.__setattr__(self, "true_theta", theta)
        cps = tuple(int(t) for t in self.checkpoints)
        require(all(2 <= t <= self.T_max for t in cps),
                f"checkpoints must lie in [2, T_max={self.T_max}]")
        require(list(cps) == sorted(cps), "checkpoints must be sorted")
        object.__setattr__(self, "checkpoints", cps)


@dataclass(frozen=True)
class EnsembleResult:
    checkpoints: tuple[int, ...]
    error_q10: np.ndarray
    error_q50: np.ndarray
    error_q90: np.ndarray
    sigma2_q50: np.ndarray
    sigma2_abs_err_q50: np.ndarray
    unstable_runs: tuple[int, ...]
    run_records: list[list[EstimateRecord]]   # one record stream per stable run
    run_seeds: tuple[int, ...]


def _single_run(cfg: EnsembleConfig, run_index: int):
    traj = simulate(cfg.spec, cfg.noise, cfg.true_theta, cfg.policy,
                    y_init=cfg.y_init, T=cfg.T_max, seed=cfg.base_seed,
                    seed_words=(cfg.base_seed, run_index))
    if not is_stable(traj):
        return run_index, None
    data = ResidualData(cfg.spec, traj, gamma=cfg.estimator.gamma, C=cfg.estimator.C)
    records = run_estimation(cfg.spec, data, cfg.estimator, true_theta=cfg.true_theta,
                             checkpoints=cfg.checkpoints)
    return run_index, records


def run_ensemble(cfg: EnsembleConfig, jobs: int = 1) -> EnsembleResult:
    """Run the ensemble and aggregate per-checkpoint quantiles.

    Unstable runs are excluded from the aggregation and reported; more than
    20% unstable runs abort with a RuntimeError.  Output is a deterministic
    function of the configuration (runs are reduced in run-index order).
    """
    require(len(cfg.checkpoints) >= 1, "ensemble needs at least one checkpoint")
    indices = list(range(cfg.num_runs))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_single_run, [cfg] * cfg.num_runs, indices))
    else:
        outcomes = [_single_run(cfg, i) for i in indices]

    unstable = tuple(i for i, rec in outcomes if rec is None)
    if len(unstable) > 0.2 * cfg.num_runs:
        raise RuntimeError(
            f"{len(unstable)}/{cfg.num_runs} runs unstable; ensemble aborted")
    streams = [rec for _, rec in outcomes if rec is not None]
    seeds = tuple(i for i, rec in outcomes if rec is not None)

    sigma_true = cfg.noise.variance
    errs = {t: [] for t in cfg.checkpoints}
    sigmas = {t: [] for t in cfg.checkpoints}
    for records in streams:
        by_t = {rec.t: rec for rec in records}
        for t in cfg.checkpoints:
            rec = by_t[t]
            errs[t].append(rec.error_norm)
            sigmas[t].append(rec.sigma2_hat)
    q10, q50, q90, s50, se50 = [], [], [], [], []
    for t in cfg.checkpoints:
        e = np.array(errs[t])
        s = np.array(sigmas[t])
        q10.append(float(np.quantile(e, 0.1)))
        q50.append(float(np.quantile(e, 0.5)))
        q90.append(float(np.quantile(e, 0.9)))
        s50.append(float(np.quantile(s, 0.5)))
        se50.append(float(np.quantile(np.abs(s - sigma_true), 0.5)))
    return EnsembleResult(checkpoints=cfg.checkpoints,
                          error_q10=np.array(q10), error_q50=np.array(q50),
                          error_q90=np.array(q90), sigma2_q50=np.array(s50),
                          sigma2_abs_err_q50=np.array(se50),
                          unstable_runs=unstable, run_records=streams, run_seeds=seeds)


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit of median error against time."""

    slope: float
    intercept: float
    r_squared: float
    theoretical_exponent: float
    times: tuple[int, ...]


def fit_rate(times, medians, config: EstimatorConfig,
             min_time: int = RATE_FIT_MIN_TIME) -> RateFit:
    """Fit log(median error) against log(t) over checkpoints >= min_time.

    Early checkpoints sit in the pre-asymptotic regime, so the fit starts at
    ``min_time``.  A median of exactly zero short-circuits to a slope of
    -inf.  Fewer than four usable checkpoints is an error.
    """
    times = [int(t) for t in times]
    medians = [float(v) for v in medians]
    pairs = [(t, v) for t, v in zip(times, medians) if t >= min_time]
    if len(pairs) < RATE_FIT_MIN_POINTS:
        raise ValueError(f"need at least {RATE_FIT_MIN_POINTS} checkpoints >= {min_time}, "
                         f"got {len(pairs)}")
    theo = -config.theta_exponent
    used = tuple(t for t, _ in pairs)
    if any(v == 0.0 for _, v in pairs):
        return RateFit(slope=-math.inf, intercept=math.nan, r_squared=0.0,
                       theoretical_exponent=theo, times=used)
    lx = np.log([t for t, _ in pairs])
    ly = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=max(0.0, min(1.0, r2)), theoretical_exponent=theo,
                   times=used)


@dataclass(frozen=True)
class VarianceDiagnostic:
    """Law-of-iterated-logarithm ratio of the variance-sum fluctuation."""

    times: tuple[int, ...]
    ratios: tuple[float, ...]
    flagged: tuple[bool, ...]


def variance_diagnostic(data: ResidualData, noise: NoiseSpec, checkpoints,
                        min_eta: float = 16.0) -> VarianceDiagnostic:
    """Ratio |sum I_i (w_{i+1}^2 - sigma_w^2)| / (sigma_bar sqrt(2 eta log log eta)).

    Requires the true noise draws (simulation mode).  Checkpoints whose
    active count is below ``min_eta`` are skipped; ratios above 1.5 are
    flagged as statistically anomalous but are a diagnostic, not a failure.
    """
    w = data.traj.w
    sigma2 = noise.variance
    sigma_bar = math.sqrt(noise.w2_variance)
    times, ratios, flags = [], [], []
    for t in sorted(int(t) for t in checkpoints):
        t = min(t, data.T - 1)  # w_{i+1} must exist for i <= t
        eta = data.eta(t)
        if eta < min_eta:
            continue
        # w_{i+1} for step i lives at array index i of the noise vector
        dev = float((data.ind[1:t + 1] * (w[1:t + 1] ** 2 - sigma2)).sum())
        denom = sigma_bar * math.sqrt(2.0 * eta * math.log(math.log(eta)))
        ratio = 0.0 if (dev == 0.0 and denom == 0.0) else \
            (math.inf if denom == 0.0 else abs(dev) / denom)
        times.append(t)
        ratios.append(ratio)
        flags.append(ratio > LIL_FLAG_RATIO)
    require(len(times) >= 1, f"no checkpoint reached the minimum active count {min_eta}")
    return VarianceDiagnostic(times=tuple(times), ratios=tuple(ratios), flagged=tuple(flags))


@dataclass(frozen=True)
class CounterexampleReport:
    """Outcome of the dead-zone non-identifiability demonstration."""

    trajectories_identical: bool
    records_identical: bool
    theta_hat_final: float
    dist_to_one: float
    dist_to_two: float
    max_dist: float
    reproduced: bool


def counterexample_demo(c_w: float, T: int = 4096, seed: int = 0,
                        points_per_unit: int = 0) -> CounterexampleReport:
    """Dead-zone system from rest with zero input: parameters 1 and 2 are indistinguishable.

    Starting at the origin with zero input, the output never leaves the dead
    band, so the trajectories for parameter values 1 and 2 coincide draw for
    draw and any single-point estimate stays at least 1/2 away from one of
    them.
    """
    require(c_w > 0, "c_w must be positive")
    model = DeadZone(width=c_w)
    spec = SystemSpec(model=model, theta_box=Box.interval(1.0, 2.0))
    noise = uniform_symmetric(c_w)
    policy = ZeroInput()
    trajs = {}
    streams = {}
    for theta in (1.0, 2.0):
        traj = simulate(spec, noise, [theta], policy, T=T, seed=seed)
        config = EstimatorConfig(lambda_=0.02, gamma=max(2.0 * c_w, 1.0), kappa=8.0,
                                 scenario=SigmaScenario.known(noise.variance))
        data = ResidualData(spec, traj, gamma=config.gamma, C=config.C)
        trajs[theta] = traj
        streams[theta] = run_estimation(spec, data, config, true_theta=[theta])
    same_y = bool(np.array_equal(trajs[1.0].y, trajs[2.0].y))
    recs1, recs2 = streams[1.0], streams[2.0]
    same_records = len(recs1) == len(recs2) and all(
        r1.t == r2.t and np.array_equal(r1.theta_hat, r2.theta_hat)
        and r1.sigma2_hat == r2.sigma2_hat and r1.feasible_count == r2.feasible_count
        for r1, r2 in zip(recs1, recs2))
    theta_hat = float(recs1[-1].theta_hat[0])
    d1, d2 = abs(theta_hat - 1.0), abs(theta_hat - 2.0)
    return CounterexampleReport(
        trajectories_identical=same_y, records_identical=same_records,
        theta_hat_final=theta_hat, dist_to_one=d1, dist_to_two=d2,
        max_dist=max(d1, d2), reproduced=same_y and same_records and max(d1, d2) >= 0.5)


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_summary_csv(result: EnsembleResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "error_q10", "error_q50", "error_q90",
                         "sigma2_q50", "unstable_count"])
        for k, t in enumerate(result.checkpoints):
            writer.writerow([str(t), _fmt(result.error_q10[k]), _fmt(result.error_q50[k]),
                             _fmt(result.error_q90[k]), _fmt(result.sigma2_q50[k]),
                             str(len(result.unstable_runs))])


def write_runs_jsonl(result: EnsembleResult, path) -> None:
    """Per-run record streams as JSON lines; gzip-compressed when the path ends in .gz."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt") as fh:
        for run, records in zip(result.run_seeds, result.run_records):
            for rec in records:
                fh.write(json.dumps({
                    "run": run, "t": rec.t,
                    "theta_hat": [float(v) for v in rec.theta_hat],
                    "sigma2_hat": rec.sigma2_hat,
                    "error_norm": rec.error_norm,
                    "feasible_count": rec.feasible_count,
                    "threshold": rec.threshold,
                }) + "\n")
