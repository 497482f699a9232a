"""Axis-aligned hyperrectangles (compact boxes) used for parameter sets and grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Box"]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``.

    Degenerate sides (``lo_j == hi_j``) are allowed; callers that need a
    nondegenerate box must check :meth:`is_nondegenerate` themselves.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.ndim != 1 or hi.ndim != 1 or lo.shape != hi.shape:
            raise ValueError(f"lo/hi must be 1-D of equal length, got {lo.shape} and {hi.shape}")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(hi < lo):
            raise ValueError(f"box has hi < lo: lo={lo}, hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def ndim(self) -> int:
        return self.lo.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def is_nondegenerate(self) -> bool:
        return bool(np.all(self.sides > 0.0))

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != self.lo.shape:
            raise ValueError(f"point of dimension {x.shape[0]} vs box of dimension {self.ndim}")
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))

    def clip(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.minimum(np.maximum(x, self.lo), self.hi)

    @staticmethod
    def interval(lo: float, hi: float) -> "Box":
        return Box(np.array([lo]), np.array([hi]))

    @staticmethod
    def point(x) -> "Box":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return Box(x.copy(), x.copy())
