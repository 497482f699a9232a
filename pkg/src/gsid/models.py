"""Parametric system maps f(x, z) and their gradients.

A model knows its parameter dimension ``n``, regressor order ``m``, how to
evaluate ``f`` (scalar and batched), its gradient in the parameter, and a
bound on ``sup ||df/dx||`` over a parameter box times a regressor ball, which
the estimator needs for its acceptance threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expressions as ex
from .boxes import Box
from .validation import check_finite_array, require

__all__ = [
    "SineProduct", "PowerBasis", "DeadZone", "ExpressionModel",
    "SystemSpec", "evaluate_model", "evaluate_gradient", "model_from_name",
]

_FD_STEP = 1e-6


def _central_differences(f, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    grad = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        h = _FD_STEP * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp, fm = f(xp, z), f(xm, z)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ArithmeticError(
                f"non-finite finite-difference stencil for coordinate x_{j + 1} at x={x!r}")
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class SineProduct:
    """f(x, z) = sin(x * z) with scalar parameter and scalar regressor."""

    name = "sin_product"
    n = 1
    m = 1

    def f(self, x, z) -> float:
        return math.sin(float(np.asarray(x).reshape(())) * float(np.asarray(z).reshape(())))

    def f_many(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        return np.sin(X[:, 0][:, None] * Z[:, 0][None, :])

    def grad(self, x, z) -> np.ndarray:
        xv = float(np.asarray(x).reshape(()))
        zv = float(np.asarray(z).reshape(()))
        return np.array([zv * math.cos(xv * zv)])

    def grad_many(self, x, Z: np.ndarray) -> np.ndarray:
        xv = float(np.asarray(x).reshape(()))
        z = Z[:, 0]
        return (z * np.cos(xv * z))[:, None]

    def grad_sup_norm(self, theta_box: Box, gamma: float) -> float:
        # sup over x in [a,b], |z| <= gamma of |z cos(xz)|.  The overall bound
        # |z| is attained whenever some multiple of pi lies in z*[a,b]; check
        # the extreme |z| = gamma first, otherwise scan z with the inner
        # maximum over x computed in closed form.
        a, b = float(theta_box.lo[0]), float(theta_box.hi[0])
        if gamma == 0.0:
            return 0.0

        def inner_max_abs_cos(z: float) -> float:
            lo, hi = min(a * z, b * z), max(a * z, b * z)
            if math.ceil(lo / math.pi) * math.pi <= hi:
                return 1.0
            return max(abs(math.cos(a * z)), abs(math.cos(b * z)))

        if inner_max_abs_cos(gamma) == 1.0 or inner_max_abs_cos(-gamma) == 1.0:
            return gamma
        zs = np.linspace(-gamma, gamma, 4097)
        return max(abs(z) * inner_max_abs_cos(z) for z in zs)


@dataclass(frozen=True)
class PowerBasis:
    """f(x, z) = x_1 z^b1 + x_2 z^b2 with distinct nonnegative integer exponents."""

    b1: int
    b2: int
    name = "power_basis"
    n = 2
    m = 1

    def __post_init__(self):
        require(int(self.b1) == self.b1 and int(self.b2) == self.b2,
                "power_basis exponents must be integers")
        require(self.b1 >= 0 and self.b2 >= 0, "power_basis exponents must be nonnegative")
        require(self.b1 != self.b2, "power_basis exponents must differ")

    def f(self, x, z) -> float:
        x = np.asarray(x, dtype=float).reshape(2)
        zv = float(np.asarray(z).reshape(()))
        return float(x[0] * zv ** self.b1 + x[1] * zv ** self.b2)

    def f_many(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        z = Z[:, 0]
        return X[:, 0][:, None] * (z ** self.b1)[None, :] + X[:, 1][:, None] * (z ** self.b2)[None, :]

    def grad(self, x, z) -> np.ndarray:
        zv = float(np.asarray(z).reshape(()))
        return np.array([zv ** self.b1, zv ** self.b2])

    def grad_many(self, x, Z: np.ndarray) -> np.ndarray:
        z = Z[:, 0]
        return np.stack([z ** self.b1, z ** self.b2], axis=1)

    def grad_sup_norm(self, theta_box: Box, gamma: float) -> float:
        # ||grad||^2 = z^(2 b1) + z^(2 b2) is even and monotone in |z|
        return math.sqrt(gamma ** (2 * self.b1) + gamma ** (2 * self.b2))


@dataclass(frozen=True)
class DeadZone:
    """Scalar-parameter map that is blind inside a band of the first regressor.

    f(x, (z1, z2)) = 0 for |z1| <= width, and x*(z1 -/+ width) outside the
    band.  Inside the band every parameter produces the same (zero) output,
    which makes the band a worst case for identification experiments that
    never leave it.
    """

    width: float
    name = "dead_zone"
    n = 1
    m = 2

    def __post_init__(self):
        require(self.width >= 0 and math.isfinite(self.width), "dead_zone width must be finite and >= 0")

    def _shifted(self, z1):
        return np.where(z1 > self.width, z1 - self.width,
                        np.where(z1 < -self.width, z1 + self.width, 0.0))

    def f(self, x, z) -> float:
        xv = float(np.asarray(x).reshape(()))
        z = np.asarray(z, dtype=float).reshape(2)
        return float(xv * self._shifted(z[0]))

    def f_many(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        return X[:, 0][:, None] * self._shifted(Z[:, 0])[None, :]

    def grad(self, x, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(2)
        return np.array([float(self._shifted(z[0]))])

    def grad_many(self, x, Z: np.ndarray) -> np.ndarray:
        return self._shifted(Z[:, 0])[:, None]

    def grad_sup_norm(self, theta_box: Box, gamma: float) -> float:
        return max(gamma - self.width, 0.0)


# catalog models carry exact grad_sup_norm maxima; expression models fall back
# to lattice sampling with a safety factor (see ExpressionModel.grad_sup_norm)
_LATTICE_PER_DIM = 64
_SUP_SAFETY = 1.25


class ExpressionModel:
    """System map defined by a parsed arithmetic expression over x_1..x_n, y_1..y_m."""

    name = "expression"

    def __init__(self, source: str, n: int, m: int):
        require(n >= 1 and m >= 1, "expression model needs n >= 1 and m >= 1")
        self.source = source
        self.node = ex.parse(source)
        self.n = int(n)
        self.m = int(m)
        for kind, index in ex.variables(self.node):
            bound = self.n if kind == "x" else self.m
            if index > bound:
                raise ValueError(
                    f"expression references {kind}_{index} but declares "
                    f"{'n' if kind == 'x' else 'm'}={bound}")

    def __repr__(self):
        return f"ExpressionModel({self.source!r}, n={self.n}, m={self.m})"

    def __eq__(self, other):
        return (isinstance(other, ExpressionModel) and other.node == self.node
                and other.n == self.n and other.m == self.m)

    def f(self, x, z) -> float:
        x = np.asarray(x, dtype=float).reshape(self.n)
        z = np.asarray(z, dtype=float).reshape(self.m)
        return ex.evaluate(self.node, x, z)

    def f_many(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        # broadcast parameters down columns, regressors along rows; domain
        # violations surface as nan/inf entries rather than exceptions
        xs = [X[:, j][:, None] for j in range(self.n)]
        zs = [Z[:, k][None, :] for k in range(self.m)]
        value = ex.evaluate(self.node, xs, zs)
        return np.broadcast_to(np.asarray(value, dtype=float), (X.shape[0], Z.shape[0]))

    def grad(self, x, z) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        z = np.asarray(z, dtype=float).reshape(self.m)
        return _central_differences(self.f, x, z)

    def grad_many(self, x, Z: np.ndarray) -> np.ndarray:
        return np.stack([self.grad(x, Z[i]) for i in range(Z.shape[0])], axis=0)

    def grad_sup_norm(self, theta_box: Box, gamma: float) -> float:
        # sampled estimate: 64-per-dimension lattice over the box and the
        # regressor ball, squared maximum inflated by 25% to cover the gap to
        # the true supremum (overestimating only widens the feasible set)
        axes = [np.linspace(theta_box.lo[j], theta_box.hi[j], _LATTICE_PER_DIM)
                for j in range(self.n)]
        z_axes = [np.linspace(-gamma, gamma, _LATTICE_PER_DIM) for _ in range(self.m)]
        Zg = np.stack([g.ravel() for g in np.meshgrid(*z_axes, indexing="ij")], axis=1)
        Zg = Zg[np.linalg.norm(Zg, axis=1) <= gamma + 1e-12]
        best = 0.0
        Xg = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        for x in Xg:
            norms = np.linalg.norm(self.grad_many(x, Zg), axis=1)
            best = max(best, float(norms.max()))
        return math.sqrt(_SUP_SAFETY) * best


_CATALOG = {
    "sin_product": SineProduct,
    "power_basis": PowerBasis,
    "dead_zone": DeadZone,
    "expression": ExpressionModel,
}


def model_from_name(name: str, **kwargs):
    """Instantiate a catalog model by name (used by the CLI config layer)."""
    try:
        cls = _CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(_CATALOG)}") from None
    return cls(**kwargs)


@dataclass(frozen=True)
class SystemSpec:
    """A parametric system: the map f, its compact parameter box, and how to differentiate."""

    model: object
    theta_box: Box
    gradient_mode: str = "analytic"

    def __post_init__(self):
        require(self.gradient_mode in ("analytic", "finite-difference"),
                f"gradient_mode must be 'analytic' or 'finite-difference', got {self.gradient_mode!r}")
        if self.theta_box.ndim != self.model.n:
            raise ValueError(
                f"theta_box dimension {self.theta_box.ndim} != model parameter dimension {self.model.n}")
        require(self.theta_box.is_nondegenerate(), "theta_box must have positive side lengths")
        probe = self.model.f(self.theta_box.center, np.zeros(self.model.m))
        if not np.isfinite(probe):
            raise ValueError("model does not evaluate to a finite value at the box center")

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m


def evaluate_model(spec: SystemSpec, x, z) -> float:
    """Evaluate f(x, z); deterministic, raises on domain errors."""
    x = check_finite_array(x, "x")
    z = check_finite_array(z, "z")
    return spec.model.f(x, z)


def evaluate_gradient(spec: SystemSpec, x, z) -> np.ndarray:
    """Gradient of f in the parameter: analytic for catalog models, else central differences."""
    x = check_finite_array(x, "x").reshape(spec.n)
    z = check_finite_array(z, "z").reshape(spec.m)
    if spec.gradient_mode == "analytic" and not isinstance(spec.model, ExpressionModel):
        return spec.model.grad(x, z)
    return _central_differences(spec.model.f, x, z)
