"""Structural excitation machinery.

The estimator's convergence rests on a recursively built family of functions
g^k_j: level 1 is the parameter gradient of f, and each next level is the
antisymmetric cross product of two level-k evaluations on stacked argument
blocks.  A stacked regressor block beta is certified exciting when the
top-level g^n_n stays away from zero over the whole stacked parameter box;
scans over sampled lattices report member / nonmember-at-sample / undecided
verdicts, never a claim of certified global nonvanishing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .boxes import Box
from .density import DensityQuery, lower_density
from .models import SystemSpec, evaluate_gradient, evaluate_model
from .validation import check_finite_array, require

__all__ = [
    "GNode", "g_eval", "Verdict", "p_prime_membership", "excitation_point_simple",
    "ExcitationReport", "scan_betas", "write_report_json", "dead_zone_excitation_product",
]


@dataclass(frozen=True)
class GNode:
    """Stacked argument blocks for a level-k evaluation of the g recursion."""

    level: int
    x_block: np.ndarray  # length 2^(k-1) * n
    y_block: np.ndarray  # length 2^(k-1) * m

    def validate(self, n: int, m: int) -> None:
        half = 2 ** (self.level - 1)
        if self.x_block.shape != (half * n,):
            raise ValueError(f"x_block must have length {half * n}, got {self.x_block.shape}")
        if self.y_block.shape != (half * m,):
            raise ValueError(f"y_block must have length {half * m}, got {self.y_block.shape}")


def g_eval(spec: SystemSpec, k: int, j: int, node: GNode) -> float:
    """Evaluate g^k_j on stacked blocks by recursive halving.

    Level 1 is the j-th parameter partial of f; level k+1 on (z, zbar) is
    g^k_k(z) g^k_j(zbar) - g^k_k(zbar) g^k_j(z).
    """
    require(1 <= k <= j <= spec.n, f"need 1 <= k <= j <= n, got k={k}, j={j}, n={spec.n}")
    x = check_finite_array(node.x_block, "x_block")
    y = check_finite_array(node.y_block, "y_block")
    GNode(node.level, x, y).validate(spec.n, spec.m)
    require(node.level == k, f"node level {node.level} != requested level {k}")
    return _g_rec(spec, k, j, x, y)


def _g_rec(spec: SystemSpec, k: int, j: int, x: np.ndarray, y: np.ndarray) -> float:
    if k == 1:
        return float(evaluate_gradient(spec, x, y)[j - 1])
    hx, hy = x.shape[0] // 2, y.shape[0] // 2
    xa, xb = x[:hx], x[hx:]
    ya, yb = y[:hy], y[hy:]
    return (_g_rec(spec, k - 1, k - 1, xa, ya) * _g_rec(spec, k - 1, j, xb, yb)
            - _g_rec(spec, k - 1, k - 1, xb, yb) * _g_rec(spec, k - 1, j, xa, ya))


class Verdict(Enum):
    MEMBER = "member"
    NONMEMBER_AT_SAMPLE = "nonmember-at-sample"
    UNDECIDED = "undecided"


def _theta_lattice(spec: SystemSpec, copies: int, density: int):
    """Per-axis lattice over the 2^(n-1)-fold stacked parameter box.

    The point count is density^(copies*n); callers with n >= 2 should pass a
    small density.
    """
    axes = []
    for _ in range(copies):
        for d in range(spec.n):
            axes.append(np.linspace(spec.theta_box.lo[d], spec.theta_box.hi[d], density))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1), tuple(len(a) for a in axes)


def p_prime_membership(spec: SystemSpec, beta, theta_grid_density: int = 33,
                       tol: float = 1e-6) -> Verdict:
    """Sampled verdict on whether g^n_n(., beta) avoids zero over the stacked box.

    The stacked parameter box is sampled on a per-axis lattice.  A sign change
    between lattice neighbours, or a sample within tol/10 of zero, certifies a
    zero crossing (nonmember-at-sample); a sampled minimum above tol reports a
    member; anything else is undecided.  No global nonvanishing claim is made
    beyond the sample.
    """
    require(tol > 0, "tol must be positive")
    copies = 2 ** (spec.n - 1)
    beta = check_finite_array(beta, "beta").reshape(copies * spec.m)
    lattice, shape = _theta_lattice(spec, copies, theta_grid_density)
    values = np.array([
        _g_rec(spec, spec.n, spec.n, x, beta) for x in lattice
    ]).reshape(shape)

    signs = np.sign(values)
    sign_change = any(
        np.any(np.diff(signs, axis=axis) != 0) for axis in range(values.ndim)
    )
    min_abs = float(np.abs(values).min())
    if sign_change or min_abs < tol / 10.0:
        return Verdict.NONMEMBER_AT_SAMPLE
    if min_abs > tol:
        return Verdict.MEMBER
    return Verdict.UNDECIDED


def min_abs_g(spec: SystemSpec, beta, theta_grid_density: int = 33) -> float:
    """Minimum of |g^n_n(x, beta)| over the sampled stacked parameter lattice."""
    copies = 2 ** (spec.n - 1)
    beta = check_finite_array(beta, "beta").reshape(copies * spec.m)
    lattice, _ = _theta_lattice(spec, copies, theta_grid_density)
    return float(min(abs(_g_rec(spec, spec.n, spec.n, x, beta)) for x in lattice))


def excitation_point_simple(spec: SystemSpec, x, x_prime, beta, tol: float = 1e-9) -> bool:
    """Whether regressor beta distinguishes parameters x and x'   (|f(x,b) - f(x',b)| > tol)."""
    x = check_finite_array(x, "x").reshape(spec.n)
    x_prime = check_finite_array(x_prime, "x_prime").reshape(spec.n)
    require(not np.array_equal(x, x_prime), "x and x_prime must differ")
    require(spec.theta_box.contains(x) and spec.theta_box.contains(x_prime),
            "x and x_prime must lie in the parameter box")
    return abs(evaluate_model(spec, x, beta) - evaluate_model(spec, x_prime, beta)) > tol


@dataclass(frozen=True)
class ExcitationReport:
    """Result of scanning candidate regressor blocks for excitation."""

    beta_samples: np.ndarray      # (N, 2^(n-1) * m)
    min_abs_g: np.ndarray         # per-sample sampled minimum of |g^n_n|
    verdicts: list[Verdict]
    members: np.ndarray           # subset of beta_samples with MEMBER verdict
    density_estimate: float       # lower density of the members in the search box

    def member_mask(self) -> np.ndarray:
        return np.array([v is Verdict.MEMBER for v in self.verdicts])


def scan_betas(spec: SystemSpec, betas, search_box: Box, theta_grid_density: int = 33,
               tol: float = 1e-6) -> ExcitationReport:
    """Scan candidate beta blocks, classify each, and measure member density."""
    betas = np.asarray(betas, dtype=float)
    if betas.ndim == 1:
        betas = betas[:, None]
    copies = 2 ** (spec.n - 1)
    if betas.shape[1] != copies * spec.m:
        raise ValueError(f"beta blocks must have length {copies * spec.m}, got {betas.shape[1]}")
    mins = np.empty(betas.shape[0])
    verdicts = []
    for i, beta in enumerate(betas):
        mins[i] = min_abs_g(spec, beta, theta_grid_density)
        verdicts.append(p_prime_membership(spec, beta, theta_grid_density, tol))
    mask = np.array([v is Verdict.MEMBER for v in verdicts])
    members = betas[mask]
    if members.shape[0] == 0:
        density = 0.0
    else:
        density = lower_density(DensityQuery(search_box, members))
    return ExcitationReport(beta_samples=betas, min_abs_g=mins, verdicts=verdicts,
                            members=members, density_estimate=density)


def write_report_json(report: ExcitationReport, path) -> None:
    payload = {
        "records": [
            {"beta": report.beta_samples[i].tolist(),
             "min_abs_g": float(report.min_abs_g[i]),
             "verdict": report.verdicts[i].value}
            for i in range(report.beta_samples.shape[0])
        ],
        "members": int(report.member_mask().sum()),
        "density_estimate": report.density_estimate,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def dead_zone_excitation_product(width: float, outer_radius: float,
                                 points_per_segment: int = 64):
    """Natural product of exciting regressor values for the dead-zone model.

    For parameters 1 and 2 the dead-zone map differs exactly where the first
    regressor leaves the band [-width, width], so the first factor grids the
    two outer segments including the band edges (the boundary case of the
    supremum over products) and the second factor grids the whole interval
    finely.  Factors are returned with their regions for the worst-factor
    density computation; the first factor's worst case sits at the origin at
    distance exactly ``width``.
    """
    require(outer_radius > width > 0, "need outer_radius > width > 0")
    require(points_per_segment >= 2, "need at least 2 points per segment")
    seg = np.linspace(width, outer_radius, points_per_segment)
    e1 = np.concatenate([-seg[::-1], seg])
    fill_count = max(points_per_segment, int(math.ceil(outer_radius / width)) + 2)
    e2 = np.linspace(-outer_radius, outer_radius, 2 * fill_count + 1)
    z = Box.interval(-outer_radius, outer_radius)
    return [z, z], [e1, e2]
