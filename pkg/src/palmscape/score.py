"""Localized palm-density scoring and control-point generation.

The density score around a reference point is the sum of inverse distances
(raised to a decay exponent) to every palm within a cutoff radius; with a
zero exponent it degrades to a plain count. Controls are uniform samples
over cluster hulls under a buffer-exclusion constraint, produced by
rejection sampling with an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import geo
from ._validation import check_non_negative, check_positive, check_xy
from .errors import InfeasibleRegion
from .geo import GeoPoint, GeoPolygon, GridSpec
from .spatial_index import PointIndex

# a reference point sitting exactly on a detection would make 1/d blow up;
# clamp to half the imagery pixel pitch instead
MIN_DISTANCE_M = 0.5

CONSTRAINT_OUTSIDE_BUFFERS = "in_cluster_outside_buffers"
CONSTRAINT_NO_SITES = "in_clusters_without_sites"

_REJECTION_BATCH = 4096
_REJECTION_MAX_PROPOSALS = 1_000_000
_REJECTION_MIN_ACCEPT = 1e-4


class IdwScorer(BaseEstimator):
    """Inverse-distance density score within a cutoff radius.

    Fit on palm coordinates in a local metre frame, then score reference
    points with :meth:`score_samples`. Follows the fit/transform estimator
    convention so it can sit in standard pipelines.

    Parameters
    ----------
    radius : float, default 1000.0
        Cutoff radius in metres; palms beyond it contribute nothing.
        The ball is closed: a palm at exactly ``radius`` counts.
    decay_w : float, default 1.0
        Decay exponent; each palm contributes ``distance ** -decay_w``.
    """

    def __init__(self, radius: float = 1000.0, decay_w: float = 1.0):
        self.radius = radius
        self.decay_w = decay_w

    def fit(self, X, y=None):
        check_positive(self.radius, "radius")
        check_non_negative(self.decay_w, "decay_w")
        X = check_xy(X, allow_single=False)
        self.index_ = PointIndex(X)
        self.n_features_in_ = 2
        return self

    def _score_one(self, center) -> tuple[float, int]:
        hits = self.index_.within_radius(center, self.radius)
        if not hits:
            return 0.0, 0
        d = np.array([dist for _, dist in hits])
        d = np.maximum(d, MIN_DISTANCE_M)
        return float(np.sum(d ** -self.decay_w)), len(hits)

    def score_samples(self, C) -> np.ndarray:
        """Density score for each reference point in ``C`` (n, 2)."""
        C = check_xy(C)
        return np.array([self._score_one(c)[0] for c in C])

    def count_within(self, C) -> np.ndarray:
        """Number of palms inside the cutoff ball of each reference point."""
        C = check_xy(C)
        return np.array([self._score_one(c)[1] for c in C], dtype=np.intp)


def idw_score(idx: PointIndex, center, radius: float = 1000.0, decay_w: float = 1.0) -> float:
    """Functional form of the density score over an existing index."""
    check_positive(radius, "radius")
    check_non_negative(decay_w, "decay_w")
    hits = idx.within_radius(np.asarray(center, dtype=np.float64), radius)
    if not hits:
        return 0.0
    d = np.maximum(np.array([dist for _, dist in hits]), MIN_DISTANCE_M)
    return float(np.sum(d ** -decay_w))


@dataclass(frozen=True)
class IdwRecord:
    id: str
    g: float
    n_within: int


@dataclass(frozen=True)
class IdwReport:
    records: tuple
    radius: float
    decay_w: float


def idw_report(scorer: IdwScorer, ids, centers) -> IdwReport:
    """Score named reference points and echo the parameters used."""
    centers = check_xy(centers)
    ids = list(ids)
    if len(ids) != centers.shape[0]:
        raise ValueError("ids and centers must align")
    records = []
    for name, c in zip(ids, centers):
        g, n_within = scorer._score_one(c)
        records.append(IdwRecord(id=str(name), g=g, n_within=n_within))
    return IdwReport(records=tuple(records), radius=scorer.radius, decay_w=scorer.decay_w)


# ---------------------------------------------------------------------------
# control points


@dataclass(frozen=True)
class ControlSample:
    points: tuple  # GeoPoint
    seed: int
    constraint: str
    n_proposals: int
    n_rejected: int


def _admissible(lons, lats, hulls, centroids, buffer_m, constraint) -> np.ndarray:
    ok = np.zeros(lons.shape, dtype=bool)
    for hull in hulls:
        ok |= geo.contains_batch(hull, lons, lats)
    if constraint == CONSTRAINT_OUTSIDE_BUFFERS and centroids:
        c_lons = np.array([c.lon for c in centroids])
        c_lats = np.array([c.lat for c in centroids])
        d = geo.haversine_m(
            lons[:, None], lats[:, None], c_lons[None, :], c_lats[None, :]
        )
        ok &= d.min(axis=1) > buffer_m
    return ok


def sample_controls(hulls, centroids, n: int, seed: int, constraint: str = CONSTRAINT_OUTSIDE_BUFFERS, buffer_m: float = 1000.0) -> ControlSample:
    """Sample ``n`` uniform points over hulls under a constraint.

    ``in_cluster_outside_buffers`` keeps points farther than ``buffer_m``
    from every centroid; ``in_clusters_without_sites`` takes the hulls as
    given (the caller passes only site-free hulls) and ignores centroids.
    Proposals are drawn over the union bounding box of the hulls, so the
    draw is uniform over the admissible region. Raises
    ``InfeasibleRegion`` when the acceptance rate collapses.
    """
    hulls = list(hulls)
    if not hulls:
        raise InfeasibleRegion("no hull polygons supplied")
    if constraint not in (CONSTRAINT_OUTSIDE_BUFFERS, CONSTRAINT_NO_SITES):
        raise ValueError(f"unknown constraint {constraint!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    centroids = [c.location if hasattr(c, "location") else c for c in centroids or []]

    boxes = np.array([h.bbox() for h in hulls])
    min_lon, min_lat = boxes[:, 0].min(), boxes[:, 1].min()
    max_lon, max_lat = boxes[:, 2].max(), boxes[:, 3].max()

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    accepted: list[GeoPoint] = []
    n_proposals = 0
    while len(accepted) < n:
        if n_proposals >= _REJECTION_MAX_PROPOSALS:
            rate = len(accepted) / max(n_proposals, 1)
            if rate < _REJECTION_MIN_ACCEPT:
                raise InfeasibleRegion(
                    f"acceptance rate {rate:.2e} after {n_proposals} proposals"
                )
        lons = rng.uniform(min_lon, max_lon, _REJECTION_BATCH)
        lats = rng.uniform(min_lat, max_lat, _REJECTION_BATCH)
        n_proposals += _REJECTION_BATCH
        ok = _admissible(lons, lats, hulls, centroids, buffer_m, constraint)
        for i in np.flatnonzero(ok):
            accepted.append(GeoPoint(float(lons[i]), float(lats[i])))
            if len(accepted) == n:
                break
    return ControlSample(
        points=tuple(accepted),
        seed=seed,
        constraint=constraint,
        n_proposals=n_proposals,
        n_rejected=n_proposals - len(accepted),
    )


def verify_controls(sample: ControlSample, hulls, centroids, buffer_m: float = 1000.0) -> bool:
    """Re-check every control point against its constraint."""
    lons = np.array([p.lon for p in sample.points])
    lats = np.array([p.lat for p in sample.points])
    centroids = [c.location if hasattr(c, "location") else c for c in centroids or []]
    ok = _admissible(lons, lats, list(hulls), centroids, buffer_m, sample.constraint)
    return bool(np.all(ok))


# ---------------------------------------------------------------------------
# grid counting


def count_per_cell(points, g: GridSpec) -> tuple[dict, int]:
    """Sparse per-cell counts of points; out-of-grid points counted apart.

    Returns ``(counts, n_outside)`` where counts maps (col, row) to the
    number of points in that cell.
    """
    pts = list(points)
    counts: dict[tuple[int, int], int] = {}
    n_outside = 0
    if not pts:
        return counts, 0
    lons = np.array([p.lon for p in pts])
    lats = np.array([p.lat for p in pts])
    xs, ys = geo.project_lonlat(lons, lats, g.origin)
    cols = np.floor(xs / g.cell_size).astype(np.intp)
    rows = np.floor(ys / g.cell_size).astype(np.intp)
    inside = (cols >= 0) & (cols < g.n_cols) & (rows >= 0) & (rows < g.n_rows)
    n_outside = int(np.count_nonzero(~inside))
    for c, r in zip(cols[inside].tolist(), rows[inside].tolist()):
        counts[(c, r)] = counts.get((c, r), 0) + 1
    return counts, n_outside
