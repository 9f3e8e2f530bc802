"""Fixed-radius ball queries over atom positions.

A k-d tree generates candidates at a slightly inflated radius; the final
membership decision is the package-wide exact predicate (<= on squared
distances), so results match a brute-force scan index for index.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .measures import PointMeasure, ball_mask

_INFLATE = 1e-9


class SpatialIndex:
    """Immutable index over the atoms of one measure; queries are thread-safe."""

    def __init__(self, positions: np.ndarray):
        self.positions = np.asarray(positions, dtype=float)
        self._tree = cKDTree(self.positions)

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Indices of atoms in the closed ball, ascending."""
        center = np.asarray(center, dtype=float)
        cand = self._tree.query_ball_point(center, radius * (1.0 + _INFLATE))
        cand = np.asarray(cand, dtype=int)
        if cand.size == 0:
            return cand
        cand.sort()
        keep = ball_mask(self.positions[cand], center, radius)
        return cand[keep]

    def query_ball_many(self, centers, radius: float) -> list:
        """One exact index array per center; centers may be an (m, d) array."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        raw = self._tree.query_ball_point(centers, radius * (1.0 + _INFLATE))
        out = []
        for center, cand in zip(centers, raw):
            cand = np.asarray(cand, dtype=int)
            if cand.size:
                cand.sort()
                cand = cand[ball_mask(self.positions[cand], center, radius)]
            out.append(cand)
        return out

    def mass_in_balls(self, weights: np.ndarray, centers, radius: float) -> np.ndarray:
        hits = self.query_ball_many(centers, radius)
        return np.array([float(np.sum(weights[h])) for h in hits])


def build_index(measure: PointMeasure) -> SpatialIndex:
    return SpatialIndex(measure.positions)


def query_ball(index: SpatialIndex, center, radius: float) -> np.ndarray:
    return index.query_ball(center, radius)
