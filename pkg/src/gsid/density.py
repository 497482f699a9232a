"""Lower densities of point sets in compact regions.

The lower density of a finite point set Z' in a region Z is the reciprocal of
the worst-case distance from a point of Z to its nearest Z' point: large
density means Z' fills Z finely.  In one dimension the worst case is found
exactly by candidate enumeration; in higher dimensions a branch-and-bound
lattice search certifies it via the 1-Lipschitz property of the distance
function.  The product-form variant takes the worst factor of a per-factor
product set, and the best such product when several candidates are supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .validation import require

__all__ = [
    "Ball", "DensityQuery", "lower_density", "farthest_distance",
    "m_sym_lower_density", "best_m_sym_lower_density",
]


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball, an alternative region for density queries."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        require(np.isfinite(c).all(), "ball center must be finite")
        require(math.isfinite(self.radius) and self.radius >= 0.0,
                "ball radius must be finite and >= 0")
        c.flags.writeable = False
        object.__setattr__(self, "center", c)

    @property
    def ndim(self) -> int:
        return self.center.shape[0]

    def bounding_box(self) -> Box:
        return Box(self.center - self.radius, self.center + self.radius)


@dataclass(frozen=True)
class DensityQuery:
    """Region (box or ball) and finite point set for a lower-density computation."""

    Z: object  # Box | Ball
    Zprime: np.ndarray  # (N, d) points

    def __post_init__(self):
        require(isinstance(self.Z, (Box, Ball)), "region must be a Box or a Ball")
        pts = np.asarray(self.Zprime, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        require(pts.shape[0] >= 1, "Zprime must be nonempty")
        if pts.shape[1] != self.Z.ndim:
            raise ValueError(f"points of dimension {pts.shape[1]} vs region of dimension {self.Z.ndim}")
        pts.flags.writeable = False
        object.__setattr__(self, "Zprime", pts)


def _farthest_distance_1d(lo: float, hi: float, points: np.ndarray) -> float:
    # the distance-to-set function is piecewise linear with local maxima only
    # at the interval endpoints and at midpoints of consecutive points
    pts = np.sort(points)
    candidates = [lo, hi]
    mids = 0.5 * (pts[:-1] + pts[1:])
    candidates.extend(np.clip(mids, lo, hi))
    return max(float(np.abs(pts - c).min()) for c in candidates)


def _farthest_distance_bb(box: Box, points: np.ndarray, tol: float, max_nodes: int,
                          ball: Ball | None = None) -> float:
    # branch and bound on sub-boxes: within a cell of half-diagonal r the
    # 1-Lipschitz distance function varies by at most r around its center
    # value.  With a ball region, cells outside the ball are dropped and the
    # probe point is the cell center projected into the ball (still a valid
    # lower bound; the cell upper bound covers the whole cell and hence the
    # ball slice inside it).
    def center_dist(c):
        return float(np.sqrt(((points - c) ** 2).sum(axis=1)).min())

    def probe(c):
        if ball is None:
            return c
        offset = c - ball.center
        norm = float(np.linalg.norm(offset))
        if norm <= ball.radius or norm == 0.0:
            return c
        return ball.center + offset * (ball.radius / norm)

    cells = [(box.lo.copy(), box.hi.copy())]
    best_lower = 0.0
    nodes = 0
    while cells and nodes < max_nodes:
        next_cells = []
        scored = []
        for lo, hi in cells:
            c = 0.5 * (lo + hi)
            r = 0.5 * float(np.linalg.norm(hi - lo))
            if ball is not None and float(np.linalg.norm(c - ball.center)) - r > ball.radius:
                continue
            d = center_dist(probe(c))
            best_lower = max(best_lower, d)
            scored.append((center_dist(c) + r, lo, hi))
        for upper, lo, hi in scored:
            if upper <= best_lower + tol:
                continue
            j = int(np.argmax(hi - lo))
            mid = 0.5 * (lo[j] + hi[j])
            hi1 = hi.copy()
            hi1[j] = mid
            lo2 = lo.copy()
            lo2[j] = mid
            next_cells.append((lo, hi1))
            next_cells.append((lo2, hi))
            nodes += 2
        cells = next_cells
    return best_lower


def farthest_distance(query: DensityQuery, tol: float = 1e-9, max_nodes: int = 200_000) -> float:
    """sup over z in Z of the distance from z to the nearest point of Z'."""
    region = query.Z
    if isinstance(region, Ball):
        if region.ndim == 1:
            return _farthest_distance_1d(float(region.center[0] - region.radius),
                                         float(region.center[0] + region.radius),
                                         query.Zprime[:, 0])
        return _farthest_distance_bb(region.bounding_box(), query.Zprime, tol,
                                     max_nodes, ball=region)
    if region.ndim == 1:
        return _farthest_distance_1d(float(region.lo[0]), float(region.hi[0]),
                                     query.Zprime[:, 0])
    return _farthest_distance_bb(region, query.Zprime, tol, max_nodes)


def lower_density(query: DensityQuery, tol: float = 1e-9) -> float:
    """Reciprocal worst-case distance; +inf when the worst-case distance is 0."""
    d = farthest_distance(query, tol=tol)
    if d == 0.0:
        return math.inf
    return 1.0 / d


def m_sym_lower_density(factors: list[Box], point_factors: list[np.ndarray],
                        tol: float = 1e-9) -> float:
    """Worst factor density of a product point set in a product region.

    ``factors[j]`` is the j-th factor region and ``point_factors[j]`` its
    finite point set; the value is min_j density(E_j | Z_j).
    """
    require(len(factors) == len(point_factors) and len(factors) >= 1,
            "need matching, nonempty factor lists")
    return min(lower_density(DensityQuery(Z, E), tol=tol)
               for Z, E in zip(factors, point_factors))


def best_m_sym_lower_density(factors: list[Box], candidates: list[list[np.ndarray]],
                             tol: float = 1e-9) -> float:
    """Best worst-factor density over several candidate product subsets."""
    require(len(candidates) >= 1, "need at least one candidate product")
    return max(m_sym_lower_density(factors, cand, tol=tol) for cand in candidates)
