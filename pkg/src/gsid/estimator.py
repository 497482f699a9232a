"""Grid-searching parameter and noise-variance estimator.

At evaluation time t the parameter box and the admissible variance interval
are equally divided into cells whose sides shrink on fixed power-law
schedules.  Every (parameter-cell, variance-cell) pair is scored by

    G_t(x, v) = sum_{i<t} (f(x, phi_i) - (y_{i+1} - u_i))^2 * I_i  -  eta_t * v

where I_i is the excitation-window indicator and eta_t counts active steps;
cell pairs with |G_t| below an explicit threshold form the feasible set, and
the estimate is the feasible pair with minimal variance (ties resolved by the
lexicographically smallest (variance-cell, parameter-cell) index pair).  The
residual uses y_{i+1} - u_i, the form consistent with the cost's expansion in
terms of the noise; with zero input the two published sign conventions agree.

The cost separates as S(x) - eta_t * v, so S is computed once per parameter
cell and feasibility over variance cells reduces to interval arithmetic on
the variance grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .boxes import Box
from .models import SystemSpec
from .simulate import Trajectory
from .validation import ConfigurationError, check_finite_array, check_scalar, require

__all__ = [
    "SigmaScenario", "EstimatorConfig", "GridSpec", "build_grid", "sigma_domain",
    "theta_side_bound", "sigma_side_bound", "omega_indicator", "c_phi",
    "ResidualData", "g_hat", "EstimateRecord", "evaluation_times", "run_estimation",
    "GridSearchEstimator", "records_to_csv",
]

DENSE_EVAL_UNTIL = 512
GEOMETRIC_RATIO = 1.25


@dataclass(frozen=True)
class SigmaScenario:
    """What is known about the noise variance.

    kind "known"     : the variance equals ``value`` exactly;
    kind "unbounded" : nothing is known, the search interval is [0, t];
    kind "bounded"   : the variance is at most ``value``.
    """

    kind: str
    value: float = math.nan

    def __post_init__(self):
        require(self.kind in ("known", "unbounded", "bounded"),
                f"scenario kind must be known/unbounded/bounded, got {self.kind!r}")
        if self.kind == "known":
            check_scalar(self.value, "known variance", minimum=0.0)
        elif self.kind == "bounded":
            check_scalar(self.value, "variance bound", minimum=0.0, strict=True)

    @staticmethod
    def known(variance: float) -> "SigmaScenario":
        return SigmaScenario("known", variance)

    @staticmethod
    def unbounded() -> "SigmaScenario":
        return SigmaScenario("unbounded")

    @staticmethod
    def bounded(sigma: float) -> "SigmaScenario":
        return SigmaScenario("bounded", sigma)


def sigma_domain(t: int, scenario: SigmaScenario) -> Box:
    """Admissible variance interval at time t."""
    require(t >= 0, f"t must be >= 0, got {t}")
    if scenario.kind == "known":
        return Box.interval(scenario.value, scenario.value)
    if scenario.kind == "unbounded":
        return Box.interval(0.0, float(t))
    return Box.interval(0.0, scenario.value)


@dataclass(frozen=True)
class EstimatorConfig:
    """Adjustable estimator parameters.

    ``lambda_`` trades convergence rate against threshold growth and must lie
    in (0, 1/4 - 1/(2 kappa)); ``gamma`` caps the regressor norm in the
    excitation window for unbounded noise; ``C`` is the recurrence radius of
    the window (may be inf).
    """

    lambda_: float
    gamma: float
    kappa: float
    C: float = math.inf
    scenario: SigmaScenario = field(default_factory=SigmaScenario.unbounded)
    schedule: str = "auto"          # auto | every-step | geometric
    geometric_ratio: float = GEOMETRIC_RATIO

    def __post_init__(self):
        check_scalar(self.kappa, "kappa", minimum=4.0, strict=True)
        upper = 0.25 - 1.0 / (2.0 * self.kappa)
        lam = check_scalar(self.lambda_, "lambda_", minimum=0.0, strict=True)
        require(lam < upper, f"lambda_ must be < 1/4 - 1/(2 kappa) = {upper}, got {lam}")
        check_scalar(self.gamma, "gamma", minimum=0.0, strict=True)
        check_scalar(self.C, "C", minimum=0.0, strict=True, allow_inf=True)
        require(self.schedule in ("auto", "every-step", "geometric"),
                f"schedule must be auto/every-step/geometric, got {self.schedule!r}")
        check_scalar(self.geometric_ratio, "geometric_ratio", minimum=1.0, strict=True)

    @property
    def theta_exponent(self) -> float:
        return 0.25 - 1.0 / (2.0 * self.kappa) - self.lambda_

    @property
    def sigma_exponent(self) -> float:
        return 0.5 - 1.0 / self.kappa - self.lambda_

    @property
    def threshold_exponent(self) -> float:
        return 0.5 + 1.0 / self.kappa + 2.0 * self.lambda_


def theta_side_bound(t: int, config: EstimatorConfig) -> float:
    """Maximal parameter-cell side at time t."""
    return float(t) ** (-config.theta_exponent)


def sigma_side_bound(t: int, config: EstimatorConfig) -> float:
    """Maximal variance-cell side at time t."""
    return float(t) ** (-config.sigma_exponent)


@dataclass(frozen=True)
class GridSpec:
    """Equal division of a box into cells with sides at most ``side_bound``."""

    box: Box
    side_bound: float
    cells: tuple[int, ...]

    @property
    def sides(self) -> np.ndarray:
        return self.box.sides / np.array(self.cells, dtype=float)

    @property
    def total(self) -> int:
        out = 1
        for c in self.cells:
            out *= c
        return out

    def centers_1d(self, dim: int) -> np.ndarray:
        side = (self.box.hi[dim] - self.box.lo[dim]) / self.cells[dim]
        return self.box.lo[dim] + (np.arange(self.cells[dim]) + 0.5) * side

    def centers(self) -> np.ndarray:
        """All cell centers, lexicographic in the per-dimension indices, shape (total, ndim)."""
        axes = [self.centers_1d(d) for d in range(self.box.ndim)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def build_grid(box: Box, side_bound: float) -> GridSpec:
    """Divide each side into ceil(side / side_bound) equal cells (1 for degenerate sides)."""
    check_scalar(side_bound, "side_bound", minimum=0.0, strict=True)
    cells = tuple(
        1 if side == 0.0 else int(math.ceil(side / side_bound))
        for side in box.sides
    )
    return GridSpec(box=box, side_bound=side_bound, cells=cells)


def omega_indicator(traj: Trajectory, i: int, gamma: float, C: float, c_w: float) -> int:
    """Excitation-window indicator for step i.

    Steps with an incomplete lagged regressor (i < m) are inactive.  With
    bounded noise the window only requires the m-lagged regressor inside the
    recurrence ball of radius C; with unbounded noise the current regressor
    must additionally have norm at most gamma.
    """
    if i < traj.m:
        return 0
    if float(np.linalg.norm(traj.phi(i - traj.m))) > C:
        return 0
    if math.isinf(c_w) and float(np.linalg.norm(traj.phi(i))) > gamma:
        return 0
    return 1


def c_phi(spec: SystemSpec, gamma: float) -> float:
    """Threshold constant n * sup||df/dx||^2 / 4 + 1 over the box and the gamma-ball."""
    sup = spec.model.grad_sup_norm(spec.theta_box, gamma)
    value = spec.n * sup ** 2 / 4.0 + 1.0
    if not math.isfinite(value):
        raise ConfigurationError(
            "gradient norm is unbounded over the parameter box and regressor ball")
    return value


class ResidualData:
    """Cached per-step data the cost function needs: regressors, targets, indicators.

    ``phi[i]`` is the regressor at step i (i = 0..T), ``d[i] = y[i+1] - u[i]``
    the residual target (i = 0..T-1), and ``ind[i]`` the excitation-window
    indicator (i = 0..T).  The cost at time t uses steps 1..t-1 and the
    indicator count eta_t through step t.
    """

    def __init__(self, spec: SystemSpec, traj: Trajectory, gamma: float, C: float,
                 c_w: float | None = None):
        self.spec = spec
        self.traj = traj
        self.gamma = float(gamma)
        self.C = float(C)
        self.c_w = traj.noise_support if c_w is None else float(c_w)
        self.T = traj.T
        self.phi = traj.phi_matrix()                       # (T+1, m)
        self.d = traj.y - traj.u                           # d[i] = y[i+1] - u[i], i = 0..T-1
        norms = np.linalg.norm(self.phi, axis=1)
        ind = np.zeros(self.T + 1)
        idx = np.arange(traj.m, self.T + 1)
        ok = norms[idx - traj.m] <= self.C
        if math.isinf(self.c_w):
            ok &= norms[idx] <= self.gamma
        ind[idx] = ok.astype(float)
        self.ind = ind
        self._eta_csum = np.cumsum(ind)

    @classmethod
    def from_arrays(cls, spec: SystemSpec, y, u=None, y_init=None, *, gamma: float,
                    C: float = math.inf, c_w: float = math.inf) -> "ResidualData":
        y = check_finite_array(y, "y", ndim=1)
        T = y.shape[0]
        u = np.zeros(T) if u is None else check_finite_array(u, "u", ndim=1)
        require(u.shape[0] == T, f"u must have length {T}, got {u.shape[0]}")
        m = spec.m
        y_init = np.zeros(m) if y_init is None else check_finite_array(y_init, "y_init").reshape(m)
        hist = np.concatenate([y_init[::-1], y])
        traj = Trajectory(hist=hist, u=u, w=np.zeros(T), m=m, seed=-1, stable=True,
                          noise_support=c_w)
        return cls(spec, traj, gamma=gamma, C=C, c_w=c_w)

    def eta(self, t: int) -> float:
        """eta_t: count of active indicators over steps 1..t."""
        require(0 <= t <= self.T, f"t must lie in [0, {self.T}]")
        return float(self._eta_csum[t] - self._eta_csum[0])

    def cost_sums(self, X: np.ndarray, t: int) -> np.ndarray:
        """S(x) = sum_{i=1}^{t-1} (f(x, phi_i) - d_i)^2 * ind_i for each row x of X."""
        require(2 <= t <= self.T, f"evaluation needs 2 <= t <= T={self.T}")
        F = self.spec.model.f_many(X, self.phi[1:t])
        R = F - self.d[1:t][None, :]
        return (R * R) @ self.ind[1:t]


def g_hat(data: ResidualData, x, x_prime: float, t: int) -> float:
    """Cost G_t(x, x') = S(x) - eta_t * x' from the cached per-step data."""
    X = check_finite_array(x, "x").reshape(1, data.spec.n)
    if t < 2:
        return -data.eta(t) * float(x_prime)
    return float(data.cost_sums(X, t)[0]) - data.eta(t) * float(x_prime)


@dataclass(frozen=True)
class EstimateRecord:
    """Estimator state at one evaluation time."""

    t: int
    theta_hat: np.ndarray
    sigma2_hat: float
    error_norm: float | None
    feasible_count: int
    threshold: float


def evaluation_times(T: int, schedule: str = "auto", extra=(),
                     dense_until: int = DENSE_EVAL_UNTIL, ratio: float = GEOMETRIC_RATIO):
    """Sorted evaluation times in [2, T].

    "every-step" evaluates at every time; "auto" evaluates every step until
    ``dense_until`` and then at geometrically spaced times (always including
    T); "geometric" applies the geometric spacing from the start.  ``extra``
    times (e.g. reporting checkpoints) are always included.
    """
    require(T >= 2, f"need T >= 2, got {T}")
    times = set(int(t) for t in extra if 2 <= int(t) <= T)
    if schedule == "every-step":
        times.update(range(2, T + 1))
    elif schedule == "auto":
        times.update(range(2, min(T, dense_until) + 1))
        t = dense_until
        k = 1
        while t < T:
            t = int(math.ceil(dense_until * ratio ** k))
            k += 1
            if t <= T:
                times.add(t)
        times.add(T)
    elif schedule == "geometric":
        t = 2
        while t <= T:
            times.add(t)
            t = max(t + 1, int(math.ceil(t * ratio)))
        times.add(T)
    else:
        raise ConfigurationError(f"unknown schedule {schedule!r}")
    return sorted(times)


def _select(S: np.ndarray, eta: float, thr: float, grid: GridSpec):
    """Feasible-set size and the minimal-variance, then minimal-index selection.

    Feasibility of (i, j) means |S_i - eta * v_j| <= thr.  For eta > 0 the
    feasible j's for fixed i form a contiguous index interval, located by
    arithmetic and then nudged so the boundary agrees with the direct
    comparison; for eta == 0 the cost does not depend on v at all.
    """
    N = grid.cells[0]
    lo = float(grid.box.lo[0])
    h = float(grid.sides[0])

    def center(j: int) -> float:
        return lo + (j + 0.5) * h

    count = 0
    best: tuple[int, int] | None = None  # (j, i)
    for i in range(S.shape[0]):
        s = float(S[i])
        if not math.isfinite(s):
            continue
        if eta == 0.0 or h == 0.0:
            # degenerate variance grid or inactive window: test cells directly
            if eta == 0.0:
                feasible = abs(s) <= thr
                j_lo, j_hi = 0, N - 1
            else:
                feasible = abs(s - eta * center(0)) <= thr
                j_lo = j_hi = 0
            if not feasible:
                continue
        else:
            raw_lo = min(max((s - thr - lo * eta) / (eta * h) - 0.5, -1.0), float(N))
            j_lo = int(np.clip(math.ceil(raw_lo), 0, N - 1))
            while j_lo > 0 and abs(s - eta * center(j_lo - 1)) <= thr:
                j_lo -= 1
            while j_lo < N and abs(s - eta * center(j_lo)) > thr:
                j_lo += 1
            if j_lo >= N:
                continue
            raw_hi = min(max((s + thr - lo * eta) / (eta * h) - 0.5, -1.0), float(N))
            j_hi = int(np.clip(math.floor(raw_hi), j_lo, N - 1))
            while j_hi + 1 < N and abs(s - eta * center(j_hi + 1)) <= thr:
                j_hi += 1
            while j_hi > j_lo and abs(s - eta * center(j_hi)) > thr:
                j_hi -= 1
        count += j_hi - j_lo + 1
        if best is None or (j_lo, i) < best:
            best = (j_lo, i)
    return count, best


def run_estimation(spec: SystemSpec, data: ResidualData, config: EstimatorConfig,
                   eval_times=None, true_theta=None, checkpoints=()):
    """Run the estimator over the cached data; one record per evaluation time.

    Records start with the time-0 initialization (box centers).  Times where
    the feasible set is empty carry the previous estimates forward.
    """
    truth = None if true_theta is None else check_finite_array(true_theta, "true_theta").reshape(spec.n)
    cphi = c_phi(spec, config.gamma)
    if eval_times is None:
        eval_times = evaluation_times(data.T, config.schedule, extra=checkpoints)
    else:
        eval_times = sorted(set(int(t) for t in eval_times) | set(int(t) for t in checkpoints))
        require(all(2 <= t <= data.T for t in eval_times),
                f"eval times must lie in [2, T={data.T}]")

    theta_hat = spec.theta_box.center
    sigma2_hat = float(sigma_domain(0, config.scenario).center[0])

    def record(t, feasible, thr):
        err = None if truth is None else float(np.linalg.norm(theta_hat - truth))
        return EstimateRecord(t=t, theta_hat=theta_hat.copy(), sigma2_hat=sigma2_hat,
                              error_norm=err, feasible_count=feasible, threshold=thr)

    records = [record(0, 0, 0.0)]
    for t in eval_times:
        thr = cphi * float(t) ** config.threshold_exponent
        theta_grid = build_grid(spec.theta_box, theta_side_bound(t, config))
        sig_grid = build_grid(sigma_domain(t, config.scenario), sigma_side_bound(t, config))
        X = theta_grid.centers()
        S = data.cost_sums(X, t)
        eta = data.eta(t)
        count, best = _select(S, eta, thr, sig_grid)
        if best is not None:
            j_star, i_star = best
            theta_hat = X[i_star]
            sigma2_hat = float(sig_grid.box.lo[0] + (j_star + 0.5) * float(sig_grid.sides[0]))
        records.append(record(t, count, thr))
    return records


class GridSearchEstimator(BaseEstimator):
    """Scikit-learn-style front end for the grid-searching identifier.

    Parameters mirror :class:`EstimatorConfig` plus the system description;
    ``fit`` consumes the output series (and optional input series) of one
    closed-loop experiment and exposes ``theta_``, ``sigma2_`` and the full
    evaluation history ``records_``.

    Parameters
    ----------
    model : catalog model instance (see :mod:`gsid.models`)
    theta_box : Box
        Compact parameter search box.
    lambda_, gamma, C, kappa : floats
        Estimator tuning parameters.
    scenario : str, "known" | "unbounded" | "bounded"
    sigma_known, sigma_bound : float or None
        Variance value / bound for the corresponding scenarios.
    noise_support : float
        Support radius of the driving noise (inf for unbounded families);
        selects the excitation-window form.
    schedule : str, "auto" | "every-step" | "geometric"
    eval_times : sequence of int or None
        Explicit evaluation times; None derives them from the schedule.
    true_theta : array or None
        When given, records carry the estimation error norm.

    Attributes
    ----------
    theta_ : ndarray, shape (n,)
        Final parameter estimate.
    sigma2_ : float
        Final noise-variance estimate.
    records_ : list of EstimateRecord
        Per-evaluation history, starting with the time-0 initialization.
    c_phi_ : float
        Threshold constant used in the feasibility test.
    """

    def __init__(self, model=None, theta_box=None, lambda_=0.02, gamma=2.0,
                 C=math.inf, kappa=8.0, scenario="unbounded", sigma_known=None,
                 sigma_bound=None, noise_support=math.inf, schedule="auto",
                 eval_times=None, true_theta=None):
        self.model = model
        self.theta_box = theta_box
        self.lambda_ = lambda_
        self.gamma = gamma
        self.C = C
        self.kappa = kappa
        self.scenario = scenario
        self.sigma_known = sigma_known
        self.sigma_bound = sigma_bound
        self.noise_support = noise_support
        self.schedule = schedule
        self.eval_times = eval_times
        self.true_theta = true_theta

    def _spec(self) -> SystemSpec:
        require(self.model is not None and self.theta_box is not None,
                "model and theta_box must be set before fitting")
        return SystemSpec(model=self.model, theta_box=self.theta_box)

    def _config(self) -> EstimatorConfig:
        if self.scenario == "known":
            require(self.sigma_known is not None, "scenario 'known' needs sigma_known")
            scen = SigmaScenario.known(self.sigma_known)
        elif self.scenario == "bounded":
            require(self.sigma_bound is not None, "scenario 'bounded' needs sigma_bound")
            scen = SigmaScenario.bounded(self.sigma_bound)
        else:
            require(self.scenario == "unbounded",
                    f"scenario must be known/unbounded/bounded, got {self.scenario!r}")
            scen = SigmaScenario.unbounded()
        return EstimatorConfig(lambda_=self.lambda_, gamma=self.gamma, kappa=self.kappa,
                               C=self.C, scenario=scen, schedule=self.schedule)

    def fit(self, y, u=None, y_init=None, checkpoints=()):
        """Identify the parameter from one output series (and optional inputs)."""
        spec = self._spec()
        config = self._config()
        data = ResidualData.from_arrays(spec, y, u, y_init, gamma=config.gamma,
                                        C=config.C, c_w=self.noise_support)
        self.records_ = run_estimation(spec, data, config, eval_times=self.eval_times,
                                       true_theta=self.true_theta, checkpoints=checkpoints)
        self.theta_ = self.records_[-1].theta_hat
        self.sigma2_ = self.records_[-1].sigma2_hat
        self.c_phi_ = c_phi(spec, config.gamma)
        self.n_evaluations_ = len(self.records_) - 1
        return self

    def fit_trajectory(self, traj: Trajectory, checkpoints=()):
        """Fit directly from a simulated trajectory (keeps its initial regressor)."""
        spec = self._spec()
        config = self._config()
        data = ResidualData(spec, traj, gamma=config.gamma, C=config.C,
                            c_w=self.noise_support)
        self.records_ = run_estimation(spec, data, config, eval_times=self.eval_times,
                                       true_theta=self.true_theta, checkpoints=checkpoints)
        self.theta_ = self.records_[-1].theta_hat
        self.sigma2_ = self.records_[-1].sigma2_hat
        self.c_phi_ = c_phi(spec, config.gamma)
        self.n_evaluations_ = len(self.records_) - 1
        return self

    def predict(self, Z):
        """One-step-ahead noise-free predictions f(theta_, z) for regressor rows z."""
        require(hasattr(self, "theta_"), "estimator is not fitted")
        spec = self._spec()
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[1] != spec.m:
            raise ValueError(f"regressor rows must have width m={spec.m}, got {Z.shape[1]}")
        return spec.model.f_many(self.theta_[None, :], Z)[0]


def _fmt(x) -> str:
    return f"{x:.17g}"


def records_to_csv(records, path, n: int) -> None:
    """Write records as CSV with 17-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"theta_hat_{j + 1}" for j in range(n)]
                        + ["sigma2_hat", "error_norm", "feasible_count", "threshold"])
        for rec in records:
            row = [str(rec.t)] + [_fmt(v) for v in rec.theta_hat]
            row.append(_fmt(rec.sigma2_hat))
            row.append("" if rec.error_norm is None else _fmt(rec.error_norm))
            row.append(str(rec.feasible_count))
            row.append(_fmt(rec.threshold))
            writer.writerow(row)
