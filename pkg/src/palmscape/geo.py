"""Geodesy and planar geometry on WGS84 inputs.

Distances are great-circle (haversine) on the IUGG mean sphere. Planar work
happens in a local azimuthal-equidistant frame anchored at an explicit
origin, which keeps distances from the origin exact and round-trips well
below a centimetre at study-area scale (tens of km).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHull, EmptySet, OutOfProjectionRange, OutsideGrid

EARTH_RADIUS_M = 6_371_008.8

# hard limit for the local projection; beyond this the planar approximation
# is no longer trustworthy for this toolkit's purposes
MAX_PROJECTION_RANGE_M = 100_000.0

# On-boundary tolerance for containment tests, in metres. Wide enough to
# absorb the frame shift when a ring built in one local frame is tested in
# the polygon's own anchor frame (~15 cm at 60 km range), narrow enough to
# keep metre-scale outsiders out.
_BOUNDARY_EPS_M = 0.25


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate (longitude, latitude in decimal degrees)."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError("GeoPoint coordinates must be finite")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class LocalXY:
    """Planar metres east (x) and north (y) of a projection origin."""

    x: float
    y: float
    origin: GeoPoint


@dataclass(frozen=True)
class GridSpec:
    """Regular metre grid anchored at its southwest corner.

    Cells are closed on their left/bottom edges and open on the
    right/top: a point exactly on an interior edge belongs to the cell
    whose closed edge it sits on (``col = floor(x / cell_size)``).
    """

    origin: GeoPoint
    n_cols: int
    n_rows: int
    cell_size: float = 200.0

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid must have at least one cell")


@dataclass(frozen=True)
class GeoPolygon:
    """Polygon with a closed exterior ring and optional holes (WGS84)."""

    exterior: tuple
    holes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "exterior", tuple(self.exterior))
        object.__setattr__(self, "holes", tuple(tuple(h) for h in self.holes))
        for ring in (self.exterior, *self.holes):
            if len(ring) < 4:
                raise ValueError("polygon ring needs at least 4 vertices (closed)")
            first, last = ring[0], ring[-1]
            if first.lon != last.lon or first.lat != last.lat:
                raise ValueError("polygon ring is not closed")

    def exterior_lonlat(self) -> np.ndarray:
        return np.array([(p.lon, p.lat) for p in self.exterior], dtype=np.float64)

    def holes_lonlat(self) -> list[np.ndarray]:
        return [
            np.array([(p.lon, p.lat) for p in h], dtype=np.float64) for h in self.holes
        ]

    def bbox(self) -> tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat) of the exterior ring."""
        arr = self.exterior_lonlat()
        return (
            float(arr[:, 0].min()),
            float(arr[:, 1].min()),
            float(arr[:, 0].max()),
            float(arr[:, 1].max()),
        )

    def anchor(self) -> GeoPoint:
        """Bounding-box centre, used as local projection origin."""
        min_lon, min_lat, max_lon, max_lat = self.bbox()
        return GeoPoint((min_lon + max_lon) / 2.0, (min_lat + max_lat) / 2.0)


# ---------------------------------------------------------------------------
# distances


def haversine_m(lon1, lat1, lon2, lat2):
    """Great-circle distance in metres; accepts scalars or numpy arrays."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (lon1, lat1, lon2, lat2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance between two points, in metres."""
    return float(haversine_m(a.lon, a.lat, b.lon, b.lat))


def min_distance_to_set(p: GeoPoint, centroids) -> float:
    """Minimum geodesic distance from ``p`` to a non-empty point set."""
    centroids = list(centroids)
    if not centroids:
        raise EmptySet("centroid set is empty")
    lons = np.array([c.lon for c in centroids])
    lats = np.array([c.lat for c in centroids])
    return float(np.min(haversine_m(p.lon, p.lat, lons, lats)))


# ---------------------------------------------------------------------------
# local projection (azimuthal equidistant on the sphere)


def project_lonlat(lons, lats, origin: GeoPoint):
    """Project lon/lat arrays to metres east/north of ``origin``."""
    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    lam0, phi0 = math.radians(origin.lon), math.radians(origin.lat)
    lam, phi = np.radians(lons), np.radians(lats)
    dlam = lam - lam0

    h = np.sin((phi - phi0) / 2.0) ** 2 + math.cos(phi0) * np.cos(phi) * np.sin(dlam / 2.0) ** 2
    c = 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))  # angular distance
    theta = np.arctan2(
        np.sin(dlam) * np.cos(phi),
        math.cos(phi0) * np.sin(phi) - math.sin(phi0) * np.cos(phi) * np.cos(dlam),
    )
    d = EARTH_RADIUS_M * c
    return d * np.sin(theta), d * np.cos(theta)


def unproject_xy(xs, ys, origin: GeoPoint):
    """Inverse of :func:`project_lonlat`; returns lon/lat arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    lam0, phi0 = math.radians(origin.lon), math.radians(origin.lat)
    c = np.hypot(xs, ys) / EARTH_RADIUS_M
    theta = np.arctan2(xs, ys)

    sin_phi = math.sin(phi0) * np.cos(c) + math.cos(phi0) * np.sin(c) * np.cos(theta)
    phi = np.arcsin(np.clip(sin_phi, -1.0, 1.0))
    lam = lam0 + np.arctan2(
        np.sin(theta) * np.sin(c) * math.cos(phi0),
        np.cos(c) - math.sin(phi0) * sin_phi,
    )
    return np.degrees(lam), np.degrees(phi)


def project(p: GeoPoint, origin: GeoPoint) -> LocalXY:
    """Project one point into the local frame anchored at ``origin``."""
    d = geodesic_distance(p, origin)
    if d > MAX_PROJECTION_RANGE_M:
        raise OutOfProjectionRange(
            f"point is {d / 1000.0:.1f} km from the projection origin (limit 100 km)"
        )
    x, y = project_lonlat(p.lon, p.lat, origin)
    return LocalXY(float(x), float(y), origin)


def unproject(q: LocalXY) -> GeoPoint:
    """Map local metres back to WGS84."""
    lon, lat = unproject_xy(q.x, q.y, q.origin)
    return GeoPoint(float(lon), float(lat))


# ---------------------------------------------------------------------------
# grids


def grid_index(p: GeoPoint, g: GridSpec) -> tuple[int, int]:
    """Cell (col, row) containing ``p``, or OutsideGrid beyond the extent."""
    x, y = project_lonlat(p.lon, p.lat, g.origin)
    col = math.floor(float(x) / g.cell_size)
    row = math.floor(float(y) / g.cell_size)
    if not (0 <= col < g.n_cols and 0 <= row < g.n_rows):
        raise OutsideGrid(f"point {p} maps to cell ({col}, {row}) outside the grid")
    return col, row


# ---------------------------------------------------------------------------
# hulls and polygons


def convex_hull_xy(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull of an (n, 2) array.

    Returns hull vertices in counter-clockwise order, without repeating
    the first vertex. Collinear points on hull edges are dropped. Raises
    ``DegenerateHull`` for fewer than 3 points or all-collinear input.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array")
    uniq = np.unique(pts, axis=0)
    if uniq.shape[0] < 3:
        raise DegenerateHull("need at least 3 distinct points")
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    p = uniq[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for pt in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], pt) <= 0:
            lower.pop()
        lower.append(pt)
    upper: list = []
    for pt in p[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], pt) <= 0:
            upper.pop()
        upper.append(pt)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise DegenerateHull("input points are collinear")
    return hull


def convex_hull(points) -> GeoPolygon:
    """Convex hull of LocalXY points, returned as a WGS84 polygon."""
    points = list(points)
    if not points:
        raise DegenerateHull("no points")
    origin = points[0].origin
    if any(q.origin != origin for q in points[1:]):
        raise ValueError("hull input mixes projection origins")
    xy = np.array([(q.x, q.y) for q in points])
    hull = convex_hull_xy(xy)
    lons, lats = unproject_xy(hull[:, 0], hull[:, 1], origin)
    ring = [GeoPoint(float(lo), float(la)) for lo, la in zip(lons, lats)]
    ring.append(ring[0])
    return GeoPolygon(tuple(ring))


def _shoelace(ring_xy: np.ndarray) -> float:
    """Signed shoelace area of a planar ring (first vertex not repeated)."""
    x = ring_xy[:, 0]
    y = ring_xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _project_ring(ring_lonlat: np.ndarray, origin: GeoPoint) -> np.ndarray:
    xs, ys = project_lonlat(ring_lonlat[:, 0], ring_lonlat[:, 1], origin)
    return np.column_stack([xs, ys])


def polygon_area(poly: GeoPolygon) -> float:
    """Polygon area in square metres; hole areas are subtracted."""
    origin = poly.anchor()
    ext = _project_ring(poly.exterior_lonlat()[:-1], origin)
    area = abs(_shoelace(ext))
    for hole in poly.holes_lonlat():
        area -= abs(_shoelace(_project_ring(hole[:-1], origin)))
    return area


def _ring_contains(xs, ys, ring_xy: np.ndarray):
    """Vectorised ray cast of query points against one planar ring."""
    inside = np.zeros(np.shape(xs), dtype=bool)
    on_edge = np.zeros(np.shape(xs), dtype=bool)
    n = ring_xy.shape[0]
    for i in range(n):
        x1, y1 = ring_xy[i]
        x2, y2 = ring_xy[(i + 1) % n]
        # on-segment test with a metre-scale tolerance
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        if seg_len2 > 0:
            t = np.clip(((xs - x1) * dx + (ys - y1) * dy) / seg_len2, 0.0, 1.0)
        else:
            t = np.zeros(np.shape(xs))
        px = x1 + t * dx - xs
        py = y1 + t * dy - ys
        on_edge |= px * px + py * py <= _BOUNDARY_EPS_M**2
        # ray cast: horizontal ray to +x
        cond = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = np.where(cond, x1 + (ys - y1) * dx / np.where(dy == 0, 1.0, dy), np.inf)
        inside ^= cond & (xs < x_int)
    return inside, on_edge


def contains_batch(poly: GeoPolygon, lons, lats) -> np.ndarray:
    """Containment test for arrays of points; boundary counts as inside."""
    origin = poly.anchor()
    xs, ys = project_lonlat(np.asarray(lons), np.asarray(lats), origin)
    ext = _project_ring(poly.exterior_lonlat()[:-1], origin)
    inside, on_edge = _ring_contains(xs, ys, ext)
    result = inside | on_edge
    for hole in poly.holes_lonlat():
        h_inside, h_edge = _ring_contains(xs, ys, _project_ring(hole[:-1], origin))
        # strictly interior to a hole is outside; hole boundary stays inside
        result &= ~(h_inside & ~h_edge)
    return result


def contains(poly: GeoPolygon, p: GeoPoint) -> bool:
    """True if ``p`` is inside or on the boundary of ``poly``."""
    return bool(contains_batch(poly, np.array([p.lon]), np.array([p.lat]))[0])


def feature_centroid(f) -> GeoPoint:
    """Representative point: identity for points, area centroid for polygons."""
    if isinstance(f, GeoPoint):
        return f
    if not isinstance(f, GeoPolygon):
        raise TypeError(f"expected GeoPoint or GeoPolygon, got {type(f).__name__}")
    origin = f.anchor()
    total_area = 0.0
    cx = 0.0
    cy = 0.0
    ext = _project_ring(f.exterior_lonlat()[:-1], origin)
    rings = [(ext, 1.0)] + [(_project_ring(h[:-1], origin), -1.0) for h in f.holes_lonlat()]
    for ring, sign in rings:
        a = _shoelace(ring)
        x = ring[:, 0]
        y = ring[:, 1]
        xr = np.roll(x, -1)
        yr = np.roll(y, -1)
        cross = x * yr - xr * y
        if a != 0.0:
            # orient each ring's contribution by its own winding
            s = sign * abs(a) / a
            total_area += sign * abs(a)
            cx += s * float(np.sum((x + xr) * cross)) / 6.0
            cy += s * float(np.sum((y + yr) * cross)) / 6.0
    if total_area <= 0.0:
        raise DegenerateHull("polygon has zero area")
    lon, lat = unproject_xy(cx / total_area, cy / total_area, origin)
    return GeoPoint(float(lon), float(lat))


def validate_simple_ring(ring_lonlat: np.ndarray) -> bool:
    """True when no two non-adjacent ring edges intersect.

    Quadratic all-pairs segment test, vectorised; rings seen in practice
    are small enough that this stays cheap.
    """
    pts = np.asarray(ring_lonlat, dtype=np.float64)[:-1]  # drop closing vertex
    n = pts.shape[0]
    if n < 3:
        return False
    a = pts
    b = np.roll(pts, -1, axis=0)
    i_idx, j_idx = np.triu_indices(n, k=2)
    # adjacent via wraparound (first and last edge share a vertex)
    keep = ~((i_idx == 0) & (j_idx == n - 1))
    i_idx, j_idx = i_idx[keep], j_idx[keep]
    if i_idx.size == 0:
        return True
    p1, p2 = a[i_idx], b[i_idx]
    q1, q2 = a[j_idx], b[j_idx]

    def orient(p, q, r):
        return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0])

    d1 = orient(p1, p2, q1)
    d2 = orient(p1, p2, q2)
    d3 = orient(q1, q2, p1)
    d4 = orient(q1, q2, p2)
    crossing = ((d1 * d2) < 0) & ((d3 * d4) < 0)
    return not bool(np.any(crossing))
