"""SRTM 1-arc-second elevation tiles: parsing, mosaic lookup, sampling.

A tile is a 3601 x 3601 grid of big-endian signed 16-bit posts, row-major
from the north edge, with the southwest corner encoded in the filename
(e.g. ``N11W074.hgt``). Void posts carry the sentinel -32768 and are never
allowed to leak into statistics: bilinear sampling fails loudly on them,
nearest-mode sampling falls back to an adjacent non-void post.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import cluster as _cluster
from . import geo
from .errors import BadFilename, BadSize, NoCoverage, VoidCell
from .geo import GeoPoint

TILE_POSTS = 3601
TILE_BYTES = TILE_POSTS * TILE_POSTS * 2  # 25,934,402
VOID = -32768

_NAME_RE = re.compile(r"^([NS])(\d{2})([EW])(\d{3})\.hgt$", re.IGNORECASE)

SUBSET_NEAR_SITE = "near_site"
SUBSET_CLUSTER_NO_BUFFER = "cluster_no_buffer"
SUBSET_CLUSTER_NO_SITES = "cluster_no_sites"
SUBSET_UNCLUSTERED = "unclustered"
SUBSET_GBIF_BASELINE = "gbif_baseline"

SUBSET_TAGS = (
    SUBSET_NEAR_SITE,
    SUBSET_CLUSTER_NO_BUFFER,
    SUBSET_CLUSTER_NO_SITES,
    SUBSET_UNCLUSTERED,
    SUBSET_GBIF_BASELINE,
)


@dataclass(frozen=True)
class SrtmTile:
    sw_lat: int
    sw_lon: int
    grid: np.ndarray  # (3601, 3601) int16, row 0 at the north edge


@dataclass(frozen=True)
class ElevationSample:
    location: GeoPoint
    elevation_m: float
    subset_tag: str


def parse_tile_name(name: str) -> tuple[int, int]:
    """Southwest corner (lat, lon) encoded in an .hgt filename."""
    m = _NAME_RE.match(name)
    if not m:
        raise BadFilename(f"{name!r} does not match [NS]dd[EW]ddd.hgt")
    lat = int(m.group(2)) * (1 if m.group(1).upper() == "N" else -1)
    lon = int(m.group(4)) * (1 if m.group(3).upper() == "E" else -1)
    return lat, lon


def load_hgt(path) -> SrtmTile:
    """Decode one SRTM tile; the name gives the corner, the size is fixed."""
    import os

    name = os.path.basename(str(path))
    sw_lat, sw_lon = parse_tile_name(name)
    size = os.path.getsize(path)
    if size != TILE_BYTES:
        raise BadSize(f"{name}: {size} bytes, expected {TILE_BYTES}")
    grid = np.fromfile(path, dtype=">i2").reshape(TILE_POSTS, TILE_POSTS)
    return SrtmTile(sw_lat=sw_lat, sw_lon=sw_lon, grid=grid)


def load_tile_dir(directory) -> dict[tuple[int, int], SrtmTile]:
    """Load every .hgt file in a directory, keyed by SW corner."""
    import os

    tiles: dict[tuple[int, int], SrtmTile] = {}
    for name in sorted(os.listdir(directory)):
        if name.lower().endswith(".hgt"):
            tile = load_hgt(os.path.join(directory, name))
            tiles[(tile.sw_lat, tile.sw_lon)] = tile
    return tiles


def _tiles_as_map(tiles) -> dict[tuple[int, int], SrtmTile]:
    if isinstance(tiles, dict):
        return tiles
    if isinstance(tiles, SrtmTile):
        return {(tiles.sw_lat, tiles.sw_lon): tiles}
    return {(t.sw_lat, t.sw_lon): t for t in tiles}


def _find_tile(tile_map, p: GeoPoint) -> SrtmTile:
    base_lat = math.floor(p.lat)
    base_lon = math.floor(p.lon)
    candidates = [(base_lat, base_lon)]
    # points exactly on a shared tile edge may be answered by either side
    if p.lat == base_lat:
        candidates.append((base_lat - 1, base_lon))
    if p.lon == base_lon:
        candidates.append((base_lat, base_lon - 1))
    if p.lat == base_lat and p.lon == base_lon:
        candidates.append((base_lat - 1, base_lon - 1))
    for key in candidates:
        if key in tile_map:
            return tile_map[key]
    raise NoCoverage(f"no tile covers ({p.lon}, {p.lat})")


def sample_elevation(tiles, p: GeoPoint, mode: str = "bilinear") -> float:
    """Elevation at ``p`` in metres from the loaded tiles.

    Bilinear (default) interpolates the four surrounding posts and raises
    ``VoidCell`` if any of them is void; nearest returns the closest post,
    falling back to the nearest non-void post within one post spacing.
    """
    if mode not in ("nearest", "bilinear"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    tile = _find_tile(_tiles_as_map(tiles), p)
    # fractional post coordinates: u across columns (west to east),
    # v down rows (north to south)
    u = (p.lon - tile.sw_lon) * (TILE_POSTS - 1)
    v = (tile.sw_lat + 1 - p.lat) * (TILE_POSTS - 1)
    u = min(max(u, 0.0), TILE_POSTS - 1)
    v = min(max(v, 0.0), TILE_POSTS - 1)
    grid = tile.grid

    if mode == "nearest":
        r = int(round(v))
        c = int(round(u))
        if grid[r, c] != VOID:
            return float(grid[r, c])
        best = None
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < TILE_POSTS and 0 <= cc < TILE_POSTS and grid[rr, cc] != VOID:
                    dist = math.hypot(rr - v, cc - u)
                    key = (dist, rr, cc)
                    if best is None or key < best:
                        best = key
        if best is None:
            raise VoidCell(f"all posts void around ({p.lon}, {p.lat})")
        return float(grid[best[1], best[2]])

    r0 = min(int(math.floor(v)), TILE_POSTS - 2)
    c0 = min(int(math.floor(u)), TILE_POSTS - 2)
    fr = v - r0
    fc = u - c0
    quad = grid[r0 : r0 + 2, c0 : c0 + 2].astype(np.float64)
    if np.any(grid[r0 : r0 + 2, c0 : c0 + 2] == VOID):
        raise VoidCell(f"void post contributes to bilinear sample at ({p.lon}, {p.lat})")
    top = quad[0, 0] * (1 - fc) + quad[0, 1] * fc
    bottom = quad[1, 0] * (1 - fc) + quad[1, 1] * fc
    return float(top * (1 - fr) + bottom * fr)


# ---------------------------------------------------------------------------
# elevation subsets


def tag_palm_subsets(palm_points, result, centroids, buffers_r: float = 1000.0) -> list[str]:
    """Assign each palm to exactly one elevation subset.

    Order of precedence: within ``buffers_r`` of a centroid that lies in a
    site-bearing cluster hull; member of a site-bearing cluster; member of
    a cluster without sites; unclustered.
    """
    palm_points = list(palm_points)
    centroids = list(centroids)
    associations = _cluster.associate_sites(result, centroids)
    site_cluster_ids = {a.cluster_id for a in associations if a.site_ids}
    site_ids = {sid for a in associations if a.site_ids for sid in a.site_ids}
    site_locs = [c.location for c in centroids if c.id_site in site_ids]

    if site_locs and palm_points:
        p_lons = np.array([p.lon for p in palm_points])
        p_lats = np.array([p.lat for p in palm_points])
        s_lons = np.array([s.lon for s in site_locs])
        s_lats = np.array([s.lat for s in site_locs])
        d = geo.haversine_m(
            p_lons[:, None], p_lats[:, None], s_lons[None, :], s_lats[None, :]
        )
        near_site = d.min(axis=1) <= buffers_r
    else:
        near_site = np.zeros(len(palm_points), dtype=bool)

    tags = []
    for i in range(len(palm_points)):
        label = int(result.labels[i])
        if near_site[i]:
            tags.append(SUBSET_NEAR_SITE)
        elif label != _cluster.NOISE and label in site_cluster_ids:
            tags.append(SUBSET_CLUSTER_NO_BUFFER)
        elif label != _cluster.NOISE:
            tags.append(SUBSET_CLUSTER_NO_SITES)
        else:
            tags.append(SUBSET_UNCLUSTERED)
    return tags


def tag_elevation_subsets(palm_points, result, centroids, tiles, buffers_r: float = 1000.0) -> tuple[list[ElevationSample], int]:
    """Tag palms and sample their elevations.

    Bilinear sampling with a nearest-mode retry on void posts; palms with
    no raster coverage are dropped and counted, never silently lost.
    Returns ``(samples, n_dropped)``.
    """
    palm_points = list(palm_points)
    tags = tag_palm_subsets(palm_points, result, centroids, buffers_r)
    tile_map = _tiles_as_map(tiles)
    samples: list[ElevationSample] = []
    dropped = 0
    for p, tag in zip(palm_points, tags):
        try:
            try:
                elev = sample_elevation(tile_map, p, "bilinear")
            except VoidCell:
                elev = sample_elevation(tile_map, p, "nearest")
        except (NoCoverage, VoidCell):
            dropped += 1
            continue
        samples.append(ElevationSample(location=p, elevation_m=elev, subset_tag=tag))
    return samples, dropped
