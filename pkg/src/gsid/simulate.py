"""Closed-loop simulation of the scalar output recursion.

The simulated plant is

    y[t+1] = f(theta, phi[t]) + u[t] + w[t+1],      phi[t] = (y[t], ..., y[t-m+1])

with a pre-designed input sequence and i.i.d. noise.  Simulation is a pure
function of (spec, noise, theta, policy, y_init, T, seed): identical arguments
give bit-identical trajectories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .models import SystemSpec
from .noise import NoiseSpec, make_generator
from .validation import check_finite_array, require

__all__ = ["Trajectory", "simulate", "write_jsonl", "trajectory_records"]

BLOWUP_BOUND = 1e12


@dataclass(frozen=True)
class Trajectory:
    """Simulated data: outputs y[1..T], inputs u[0..T-1], noise w[1..T].

    ``hist`` stores outputs chronologically including the initial regressor
    window, so ``hist[t + m - 1]`` is y[t] and ``phi(t)`` is a verbatim
    sliding window of it.  ``stable`` is False when the run tripped the
    blow-up guard and was truncated.
    """

    hist: np.ndarray          # y[-m+1], ..., y[0], y[1], ..., y[T]
    u: np.ndarray             # u[0..T-1]
    w: np.ndarray             # w[1..T] stored at indices 0..T-1
    m: int
    seed: int
    stable: bool = True
    noise_support: float = math.inf  # support radius of the driving noise

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def y(self) -> np.ndarray:
        """Outputs y[1..T]."""
        return self.hist[self.m:]

    @property
    def y_init(self) -> np.ndarray:
        """Initial regressor phi[0] = (y[0], ..., y[-m+1])."""
        return self.hist[self.m - 1::-1][: self.m]

    def phi(self, t: int) -> np.ndarray:
        """Regressor phi[t] = (y[t], ..., y[t-m+1]) for 0 <= t <= T."""
        if not 0 <= t <= self.T:
            raise IndexError(f"phi({t}) outside simulated range [0, {self.T}]")
        return self.hist[t: t + self.m][::-1]

    def phi_matrix(self) -> np.ndarray:
        """All regressors stacked: row t is phi[t], for t = 0..T."""
        idx = np.arange(self.T + 1)[:, None] + np.arange(self.m - 1, -1, -1)[None, :]
        return self.hist[idx]


def simulate(spec: SystemSpec, noise: NoiseSpec, theta, policy, y_init=None,
             T: int = 1, seed: int = 0, blowup_bound: float = BLOWUP_BOUND,
             seed_words=None) -> Trajectory:
    """Run the output recursion for T steps.

    ``y_init`` is the initial regressor (y[0], ..., y[-m+1]); the default is
    the zero vector.  If some |y[t]| exceeds ``blowup_bound`` the trajectory
    is truncated at that step and flagged unstable instead of overflowing.
    ``seed_words`` keys the noise stream with several words (e.g.
    (base_seed, run_index) inside an ensemble); it defaults to (seed,).
    """
    require(T >= 1, f"T must be >= 1, got {T}")
    theta = check_finite_array(theta, "theta").reshape(spec.n)
    if not spec.theta_box.contains(theta):
        raise ValueError(f"theta={theta} outside the parameter box")
    m = spec.m
    if y_init is None:
        y_init = np.zeros(m)
    y_init = check_finite_array(y_init, "y_init").reshape(m)

    words = (seed,) if seed_words is None else tuple(int(s) for s in seed_words)
    gen = make_generator(*words)
    w = noise.draw(gen, T)

    hist = np.empty(m + T)
    hist[:m] = y_init[::-1]  # chronological: y[-m+1], ..., y[0]
    u = np.empty(T)
    stable = True
    steps = 0
    for t in range(T):
        phi_t = hist[t: t + m][::-1]
        u[t] = policy.u(t)
        y_next = spec.model.f(theta, phi_t) + u[t] + w[t]
        hist[m + t] = y_next
        steps = t + 1
        if abs(y_next) > blowup_bound:
            stable = False
            break
    return Trajectory(hist=hist[: m + steps], u=u[:steps], w=w[:steps], m=m,
                      seed=seed, stable=stable, noise_support=noise.c_w)


def trajectory_records(traj: Trajectory):
    """Per-step records {t, y, u, w}: output y[t], the input u[t-1] that
    produced it, and the noise w[t]."""
    for t in range(1, traj.T + 1):
        yield {"t": t, "y": float(traj.y[t - 1]), "u": float(traj.u[t - 1]),
               "w": float(traj.w[t - 1])}


def write_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for rec in trajectory_records(traj):
            fh.write(json.dumps(rec) + "\n")
