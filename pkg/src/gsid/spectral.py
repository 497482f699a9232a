"""Determinant decomposition and minimum-eigenvalue bounds for Gram matrices.

Given vectors a_1..a_t in R^n, the leading principal minors of the Gram
matrix S = sum_i a_i a_i^T admit a closed form built from two recursively
defined coefficient families mu and nu living on a hierarchy of index tuples:
level 1 indexes the vectors themselves and each next level indexes ordered
pairs of previous-level tuples.  A separation constant epsilon extracted from
the same tables yields the lower bound

    lambda_min(S) >= epsilon^(n-1) / n * min_j sum_i a_ij^2,

which this module computes and checks against an independent Jacobi
eigenvalue oracle.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .models import SystemSpec, evaluate_gradient
from .simulate import Trajectory
from .validation import require

__all__ = [
    "VectorFamily", "IndexHierarchy", "MuNuTable", "HierarchySizeError",
    "DecompositionError", "build_mu_nu", "minor_via_decomposition",
    "cofactor_via_decomposition", "epsilon_condition", "BoundCheck",
    "min_eigenvalue_bound_check", "eigen_oracle", "estimator_excitation_bridge",
    "random_family", "verify_random_instances", "write_verification_jsonl",
]

HIERARCHY_CAP = 100_000


class HierarchySizeError(RuntimeError):
    """Raised when an index-hierarchy level would exceed the configured cap."""


class DecompositionError(ArithmeticError):
    """Raised when a closed-form denominator vanishes."""


@dataclass(frozen=True)
class VectorFamily:
    """Vectors a_1..a_t as rows of a (t, n) matrix."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"family must be a 2-D array, got shape {a.shape}")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    @property
    def t(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def gram(self) -> np.ndarray:
        return self.a.T @ self.a

    def column_sums_sq(self) -> np.ndarray:
        return (self.a ** 2).sum(axis=0)


def hierarchy_sizes(t: int, upto: int) -> list[int]:
    """Cardinalities of levels 1..upto: t, C(t,2), C(C(t,2),2), ..."""
    sizes = [t]
    for _ in range(upto - 1):
        s = sizes[-1]
        sizes.append(s * (s - 1) // 2)
    return sizes


class IndexHierarchy:
    """Levels of index tuples: level 1 is 1..t, level k pairs of level k-1 tuples.

    Tuples at each level are kept sorted in the lexicographic order used to
    orient pairs, so pairing by position is exactly pairing by that order.
    """

    def __init__(self, t: int, upto: int, cap: int = HIERARCHY_CAP):
        require(t >= 1 and upto >= 1, "need t >= 1 and upto >= 1")
        sizes = hierarchy_sizes(t, upto)
        for k, s in enumerate(sizes, start=1):
            if s > cap:
                raise HierarchySizeError(
                    f"level {k} would hold {s} tuples, exceeding the cap {cap}")
        self.t = t
        self.levels: list[np.ndarray] = [np.arange(t)[:, None]]  # flattened index tuples
        self.pairs: list[np.ndarray] = [np.empty((t, 0), dtype=int)]
        for k in range(2, upto + 1):
            prev = self.levels[-1]
            idx = np.array(list(itertools.combinations(range(prev.shape[0]), 2)), dtype=int)
            idx = idx.reshape(-1, 2)
            flat = np.concatenate([prev[idx[:, 0]], prev[idx[:, 1]]], axis=1) \
                if idx.size else np.empty((0, prev.shape[1] * 2), dtype=int)
            self.levels.append(flat)
            self.pairs.append(idx)

    def size(self, k: int) -> int:
        return self.levels[k - 1].shape[0]

    def tuples(self, k: int) -> np.ndarray:
        """Flattened index tuples (0-based) at level k, lexicographically sorted."""
        return self.levels[k - 1]


@dataclass
class MuNuTable:
    """mu and nu coefficient families over the index hierarchy.

    ``nu[k][s]`` holds nu_{h,s}(k) for all level-k tuples h, for s = k..n;
    ``mu[k] is nu[k][k]``.  Level-1 values are the family columns themselves.
    """

    family: VectorFamily
    hierarchy: IndexHierarchy
    nu: dict[int, dict[int, np.ndarray]]

    @property
    def levels(self) -> int:
        return len(self.nu)

    def mu(self, k: int) -> np.ndarray:
        return self.nu[k][k]

    def mu_sq_sum(self, k: int) -> float:
        return float((self.mu(k) ** 2).sum())


def build_mu_nu(fam: VectorFamily, upto: int, cap: int = HIERARCHY_CAP) -> MuNuTable:
    """Build the coefficient tables through level ``upto``.

    Level 1: mu_h(1) = a_{h,1}, nu_{h,s}(1) = a_{h,s}.  For h = (p, q) one
    level up, nu_{h,s}(k+1) = mu_p(k) nu_{q,s}(k) - mu_q(k) nu_{p,s}(k) for
    s > k, and mu(k+1) is the s = k+1 column.
    """
    n = fam.n
    require(1 <= upto <= n, f"levels must lie in [1, n]={n}, got {upto}")
    hier = IndexHierarchy(fam.t, upto, cap=cap)
    nu: dict[int, dict[int, np.ndarray]] = {1: {s: fam.a[:, s - 1].copy() for s in range(1, n + 1)}}
    for k in range(2, upto + 1):
        idx = hier.pairs[k - 1]
        p, q = idx[:, 0], idx[:, 1]
        prev = nu[k - 1]
        mu_prev = prev[k - 1]
        level = {}
        for s in range(k, n + 1):
            level[s] = mu_prev[p] * prev[s][q] - mu_prev[q] * prev[s][p]
        nu[k] = level
    return MuNuTable(family=fam, hierarchy=hier, nu=nu)


def _denominator(table: MuNuTable, k: int) -> float:
    den = 1.0
    for j in range(1, k):
        s = table.mu_sq_sum(j)
        power = k - j - 1
        if power > 0:
            if s == 0.0:
                raise DecompositionError(
                    f"sum of squared mu at level {j} vanishes; closed form undefined")
            den *= s ** power
    return den


def minor_via_decomposition(table: MuNuTable, k: int) -> float:
    """k-th leading principal minor of the Gram matrix from the closed form."""
    require(1 <= k <= table.levels, f"tables only reach level {table.levels}")
    return float((table.mu(k) ** 2).sum()) / _denominator(table, k)


def cofactor_via_decomposition(table: MuNuTable, k: int) -> float:
    """(k,k) cofactor of the (k+1)-th leading principal minor from the closed form."""
    require(1 <= k <= min(table.levels, table.family.n - 1), "cofactor level out of range")
    return float((table.nu[k][k + 1] ** 2).sum()) / _denominator(table, k)


def epsilon_condition(table: MuNuTable) -> float:
    """Largest epsilon with sum (mu_p nu_qs - mu_q nu_ps)^2 >= 2 eps sum mu_p^2 nu_qs^2.

    Over ordered pairs the two sides collapse to Gram quantities:
    LHS = 2[(sum mu^2)(sum nu_s^2) - (sum mu nu_s)^2] and the RHS sum is
    (sum mu^2)(sum nu_s^2), so each (k, s) contributes one minus the squared
    cosine between the mu and nu_s coefficient vectors.  Returns 0 when some
    right side vanishes, and +inf for n = 1 where no pairs (k, s) exist.
    """
    n = table.family.n
    best = math.inf
    for k in range(1, min(table.levels, n - 1) + 1):
        mu = table.mu(k)
        mu_sq = float((mu ** 2).sum())
        for s in range(k + 1, n + 1):
            nus = table.nu[k][s]
            nus_sq = float((nus ** 2).sum())
            rhs = mu_sq * nus_sq
            if rhs == 0.0:
                return 0.0
            cross = float((mu * nus).sum())
            eps = (rhs - cross ** 2) / rhs
            best = min(best, max(eps, 0.0))
    return best


def eigen_oracle(S: np.ndarray, off_tol: float = 1e-12, max_sweeps: int = 64) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Sweeps rotate every off-diagonal pair until the off-diagonal Frobenius
    norm falls below ``off_tol`` (scaled by the matrix magnitude).  The
    eigenvalue sum is checked against the trace to 1e-9 (same scaling).
    """
    A = np.asarray(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max()))
    if float(np.abs(A - A.T).max()) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric to 1e-12")
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    trace = float(np.trace(A))

    def off_norm(M):
        o = M - np.diag(np.diag(M))
        return float(np.sqrt((o ** 2).sum()))

    for _ in range(max_sweeps):
        if off_norm(A) <= off_tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # classical Jacobi rotation annihilating A[p, q]
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau)) \
                    if tau != 0.0 else 1.0
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                A = 0.5 * (A + A.T)
    eigs = np.sort(np.diag(A))
    if abs(float(eigs.sum()) - trace) > 1e-9 * scale * n:
        raise ArithmeticError("eigenvalue sum drifted from the trace; rotation failed")
    return eigs


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of one minimum-eigenvalue bound verification."""

    epsilon: float
    bound: float
    lambda_min: float
    holds: bool
    slack: float


def min_eigenvalue_bound_check(fam: VectorFamily, tol: float = 1e-9) -> BoundCheck:
    """Compute epsilon, the bound eps^(n-1)/n * min_j sum a_ij^2, and check it."""
    n = fam.n
    if n == 1:
        eps = math.inf
    else:
        table = build_mu_nu(fam, upto=n - 1)
        eps = epsilon_condition(table)
    min_col = float(fam.column_sums_sq().min())
    bound = (eps ** (n - 1)) / n * min_col if n > 1 else min_col
    lam = float(eigen_oracle(fam.gram())[0])
    return BoundCheck(epsilon=eps, bound=bound, lambda_min=lam,
                      holds=lam >= bound - tol, slack=lam - bound)


def estimator_excitation_bridge(spec: SystemSpec, traj: Trajectory, theta_assignments,
                                gamma: float, C: float,
                                noise_support: float | None = None) -> VectorFamily:
    """Masked-gradient rows used to probe regressor-information growth.

    Row h is the parameter gradient of f at (theta_assignments[h-1], phi[h])
    times the excitation-window indicator at step h, for h = 1..T.  Feeding
    the result to :func:`min_eigenvalue_bound_check` gives an empirical handle
    on how fast the information matrix's smallest eigenvalue grows with the
    number of active steps.
    """
    from .estimator import omega_indicator  # local import to avoid a cycle

    thetas = np.asarray(theta_assignments, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    require(thetas.shape == (traj.T, spec.n),
            f"need one parameter point per step: expected {(traj.T, spec.n)}, got {thetas.shape}")
    for row in thetas:
        require(spec.theta_box.contains(row), f"assignment {row} outside the parameter box")
    c_w = traj.noise_support if noise_support is None else noise_support
    rows = np.zeros((traj.T, spec.n))
    for h in range(1, traj.T + 1):
        if omega_indicator(traj, h, gamma=gamma, C=C, c_w=c_w):
            rows[h - 1] = evaluate_gradient(spec, thetas[h - 1], traj.phi(h))
    return VectorFamily(rows)


def random_family(gen: np.random.Generator, t_max: int = 6, n_max: int = 3) -> VectorFamily:
    """Random small family with i.i.d. standard normal entries (t in [2, t_max])."""
    t = int(gen.integers(2, t_max + 1))
    n = int(gen.integers(1, n_max + 1))
    return VectorFamily(gen.standard_normal((t, n)))


def _verify_one(args):
    seed, i, t_max, n_max = args
    from .noise import make_generator

    fam = random_family(make_generator(seed, i), t_max=t_max, n_max=n_max)
    chk = min_eigenvalue_bound_check(fam)
    return {
        "seed": seed, "instance": i, "t": fam.t, "n": fam.n,
        "epsilon": chk.epsilon, "bound": chk.bound,
        "lambda_min": chk.lambda_min, "holds": chk.holds,
    }


def verify_random_instances(instances: int, seed: int, t_max: int = 6, n_max: int = 3,
                            jobs: int = 1):
    """Bound checks on seeded random families: one record per instance.

    Instances are seeded individually, so the result is deterministic and
    independent of ``jobs``; parallel results are reduced in instance order.
    """
    tasks = [(seed, i, t_max, n_max) for i in range(instances)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_verify_one, tasks))
    return [_verify_one(task) for task in tasks]


def write_verification_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
