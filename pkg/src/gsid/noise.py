"""Noise families and their reproducible samplers.

All families are zero-mean i.i.d. with a moment order ``kappa > 4``.  Draws
come from a counter-based Philox stream keyed by the seed, mapped through
inverse CDFs (uniform, Student-t) or Box-Muller (Gaussian) so that identical
seeds give bit-identical sequences across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .validation import check_scalar, require

__all__ = ["NoiseSpec", "uniform_symmetric", "gaussian", "student_t", "make_generator"]

_TINY = 2.0 ** -53


def make_generator(*seed_words: int) -> np.random.Generator:
    """Philox generator keyed by one or more integer seed words."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(seed_words))))


@dataclass(frozen=True)
class NoiseSpec:
    """One of the supported zero-mean noise families.

    family: "uniform" (support [-c_w, c_w]), "gaussian" (std sigma_w) or
    "student_t" (df, scale).  ``kappa`` is the moment order the estimator may
    rely on; the Student-t family requires ``df > kappa``.
    """

    family: str
    c_w: float = math.inf      # support radius; finite only for "uniform"
    sigma_w: float = 0.0       # gaussian std
    df: float = 0.0            # student_t degrees of freedom
    scale: float = 0.0         # student_t scale
    kappa: float = 8.0

    def __post_init__(self):
        check_scalar(self.kappa, "kappa", minimum=4.0, strict=True)
        if self.family == "uniform":
            require(math.isfinite(self.c_w) and self.c_w >= 0.0,
                    "uniform noise needs a finite support radius c_w >= 0")
        elif self.family == "gaussian":
            check_scalar(self.sigma_w, "sigma_w", minimum=0.0, strict=True)
            require(self.c_w == math.inf, "gaussian noise is unbounded; c_w must be inf")
        elif self.family == "student_t":
            check_scalar(self.scale, "scale", minimum=0.0, strict=True)
            require(self.df > self.kappa,
                    f"student_t needs df > kappa for the kappa-th moment, got df={self.df}, kappa={self.kappa}")
            require(self.c_w == math.inf, "student_t noise is unbounded; c_w must be inf")
        else:
            raise ValueError(f"unknown noise family {self.family!r}")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.c_w)

    @property
    def variance(self) -> float:
        """E w^2 (sigma_w^2 in the estimator's scenarios)."""
        if self.family == "uniform":
            return self.c_w ** 2 / 3.0
        if self.family == "gaussian":
            return self.sigma_w ** 2
        return self.scale ** 2 * self.df / (self.df - 2.0)

    @property
    def w2_variance(self) -> float:
        """Var(w^2) = E w^4 - (E w^2)^2, the scale of variance-sum fluctuations."""
        if self.family == "uniform":
            return self.c_w ** 4 * (1.0 / 5.0 - 1.0 / 9.0)
        if self.family == "gaussian":
            return 2.0 * self.sigma_w ** 4
        fourth = 3.0 * self.df ** 2 * self.scale ** 4 / ((self.df - 2.0) * (self.df - 4.0))
        return fourth - self.variance ** 2

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "uniform":
            return self.c_w * (2.0 * gen.random(size) - 1.0)
        if self.family == "gaussian":
            # Box-Muller on uniform pairs; 1-u keeps the log argument in (0, 1]
            k = (size + 1) // 2
            u1 = 1.0 - gen.random(k)
            u2 = gen.random(k)
            r = np.sqrt(-2.0 * np.log(u1))
            z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:size]
            return self.sigma_w * z
        u = gen.random(size)
        u = np.where(u == 0.0, _TINY, u)
        return self.scale * stats.t.ppf(u, self.df)


def uniform_symmetric(c_w: float, kappa: float = 8.0) -> NoiseSpec:
    return NoiseSpec(family="uniform", c_w=c_w, kappa=kappa)


def gaussian(sigma_w: float, kappa: float = 8.0) -> NoiseSpec:
    return NoiseSpec(family="gaussian", sigma_w=sigma_w, kappa=kappa)


def student_t(df: float, scale: float, kappa: float = 8.0) -> NoiseSpec:
    return NoiseSpec(family="student_t", df=df, scale=scale, kappa=kappa)
