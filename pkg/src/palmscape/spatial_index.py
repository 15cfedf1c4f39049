"""Exact planar neighbour queries over a fixed point set.

A thin wrapper around a k-d tree that pins down the toolkit's query
semantics: closed balls (``distance <= r``), ascending k-NN output with
ties broken by lower point id, and distances computed with the same
float64 arithmetic a linear scan would use, so results are exactly
reproducible against a brute-force oracle.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ._validation import check_xy
from .errors import EmptyInput, MixedOrigins
from .geo import LocalXY

# slack applied to candidate-gathering radii so last-ulp differences in the
# tree's internal arithmetic can never drop a boundary point
_RADIUS_SLACK = 1e-9


class PointIndex:
    """Immutable spatial index over points in one local metre frame."""

    def __init__(self, points):
        if not isinstance(points, np.ndarray):
            points = list(points)
            if not points:
                raise EmptyInput("no points supplied")
        if not isinstance(points, np.ndarray) and isinstance(points[0], LocalXY):
            origins = {q.origin for q in points}
            if len(origins) > 1:
                raise MixedOrigins("points come from different projection origins")
            self.origin = points[0].origin
            xy = np.array([(q.x, q.y) for q in points], dtype=np.float64)
        else:
            xy = check_xy(points, allow_single=False)
            self.origin = None
        self._xy = xy
        self._tree = cKDTree(xy)

    @property
    def n(self) -> int:
        return self._xy.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._xy

    def _exact_distances(self, q: np.ndarray, ids: np.ndarray) -> np.ndarray:
        d = self._xy[ids] - q
        return np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)

    def knn(self, q, k: int):
        """The ``min(k, n)`` nearest points to ``q`` as (id, distance) pairs.

        Output is sorted by ascending distance, ties by lower id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(q, dtype=np.float64).reshape(2)
        k_eff = min(k, self.n)
        d, _ = self._tree.query(q, k=k_eff)
        d = np.atleast_1d(d)
        rmax = float(d[-1])
        ids = np.asarray(
            self._tree.query_ball_point(q, rmax * (1.0 + _RADIUS_SLACK) + _RADIUS_SLACK),
            dtype=np.intp,
        )
        dist = self._exact_distances(q, ids)
        order = np.lexsort((ids, dist))
        ids, dist = ids[order][:k_eff], dist[order][:k_eff]
        return list(zip(ids.tolist(), dist.tolist()))

    def within_radius(self, q, r: float):
        """All points with distance <= r from ``q`` as (id, distance) pairs."""
        if r < 0:
            raise ValueError("radius must be >= 0")
        q = np.asarray(q, dtype=np.float64).reshape(2)
        ids = np.asarray(
            self._tree.query_ball_point(q, r * (1.0 + _RADIUS_SLACK) + _RADIUS_SLACK),
            dtype=np.intp,
        )
        if ids.size == 0:
            return []
        dist = self._exact_distances(q, ids)
        keep = dist <= r
        ids, dist = ids[keep], dist[keep]
        order = np.argsort(ids)
        return list(zip(ids[order].tolist(), dist[order].tolist()))

    # --- bulk forms used by the clustering and scoring internals ---

    def knn_distances(self, k: int) -> np.ndarray:
        """Distance to the k-th nearest neighbour for every indexed point.

        The query point itself counts as neighbour 1, so ``k=1`` is all
        zeros. Only the k-th order statistic is needed, so tie order is
        irrelevant here.
        """
        if not 1 <= k <= self.n:
            raise ValueError(f"k must be in [1, {self.n}]")
        d, _ = self._tree.query(self._xy, k=k)
        d = np.atleast_2d(d)
        return d[:, -1].astype(np.float64)

    def batch_knn(self, queries: np.ndarray, k: int):
        """(distances, ids) arrays of shape (m, min(k, n)) for many queries."""
        k_eff = min(k, self.n)
        d, i = self._tree.query(np.asarray(queries, dtype=np.float64), k=k_eff)
        if k_eff == 1:
            d = d[:, None]
            i = i[:, None]
        return d, i

    def count_within(self, queries: np.ndarray, r: float) -> np.ndarray:
        """Number of indexed points within the closed ball of radius r."""
        out = np.empty(len(queries), dtype=np.intp)
        for row, q in enumerate(np.asarray(queries, dtype=np.float64)):
            out[row] = len(self.within_radius(q, r))
        return out


def build(points) -> PointIndex:
    """Build an immutable index; see :class:`PointIndex`."""
    return PointIndex(points)
