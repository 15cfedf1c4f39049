"""Loaders for the external datasets the pipeline consumes.

All spatial inputs are GeoJSON FeatureCollections in WGS84 (lon-lat order),
parsed by content rather than file extension since several upstream files
ship as ``.txt``. Occurrence tables are header-row delimited text with the
delimiter sniffed from the header line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import geo
from .errors import (
    EmptyTable,
    GeometryMismatch,
    MissingColumn,
    MissingConfidence,
    ParseError,
    ValidationError,
)
from .geo import GeoPoint, GeoPolygon

# order in which detection confidence is looked up in feature properties
CONFIDENCE_KEYS = ("confidence", "score", "prob")

CERTAINTY_LEVELS = ("high", "medium", "low")


@dataclass(frozen=True)
class Feature:
    """One GeoJSON feature: id, geometry and its raw property map."""

    id: str
    geometry: object  # GeoPoint | GeoPolygon
    properties: dict


@dataclass(frozen=True)
class PalmDetection:
    id: str
    centroid: GeoPoint
    confidence: float
    footprint: GeoPolygon | None = None


@dataclass(frozen=True)
class ArchaeoCentroid:
    id_site: str
    location: GeoPoint
    certainty: str = "low"
    source: str = "N/A"


@dataclass(frozen=True)
class AnnotationCell:
    cell_id: str
    polygon: GeoPolygon
    area_m2: float
    perimeter_m: float


@dataclass(frozen=True)
class GbifOccurrence:
    location: GeoPoint
    elevation_m: float | None = None
    taxon: str = ""


@dataclass(frozen=True)
class BuildingFootprint:
    polygon: GeoPolygon
    centroid: GeoPoint


# ---------------------------------------------------------------------------
# GeoJSON


def _feature_id(raw: dict, position: int) -> str:
    if "id" in raw:
        return str(raw["id"])
    props = raw.get("properties") or {}
    for key in ("id", "ID", "Id"):
        if key in props:
            return str(props[key])
    return f"feature-{position}"


def _parse_point(coords, fid: str) -> GeoPoint:
    if not isinstance(coords, (list, tuple)) or len(coords) < 2:
        raise ValidationError(f"feature {fid}: malformed Point coordinates")
    try:
        return GeoPoint(float(coords[0]), float(coords[1]))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"feature {fid}: {exc}") from exc


def _parse_ring(ring, fid: str) -> list[GeoPoint]:
    if not isinstance(ring, (list, tuple)) or len(ring) < 4:
        raise ValidationError(f"feature {fid}: polygon ring needs >= 4 positions")
    pts = [_parse_point(c, fid) for c in ring]
    if pts[0].lon != pts[-1].lon or pts[0].lat != pts[-1].lat:
        raise ValidationError(f"feature {fid}: polygon ring is not closed")
    arr = np.array([(p.lon, p.lat) for p in pts])
    if not geo.validate_simple_ring(arr):
        raise ValidationError(f"feature {fid}: polygon ring self-intersects")
    return pts


def _parse_polygon(coords, fid: str) -> GeoPolygon:
    if not isinstance(coords, (list, tuple)) or len(coords) < 1:
        raise ValidationError(f"feature {fid}: malformed Polygon coordinates")
    rings = [_parse_ring(r, fid) for r in coords]
    return GeoPolygon(tuple(rings[0]), tuple(tuple(r) for r in rings[1:]))


def load_feature_collection(path, expected_geometry: str = "any") -> list[Feature]:
    """Parse and validate a FeatureCollection from ``path``.

    ``expected_geometry`` is ``"Point"``, ``"Polygon"`` or ``"any"``.
    Feature order is preserved; properties come through untouched.
    """
    if expected_geometry not in ("Point", "Polygon", "any"):
        raise ValueError(f"unsupported expected_geometry {expected_geometry!r}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno} (offset {exc.pos})"
        ) from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: not a GeoJSON FeatureCollection")
    raw_features = doc.get("features")
    if not isinstance(raw_features, list):
        raise ParseError(f"{path}: FeatureCollection has no feature list")

    features: list[Feature] = []
    for pos, raw in enumerate(raw_features):
        fid = _feature_id(raw if isinstance(raw, dict) else {}, pos)
        if not isinstance(raw, dict) or raw.get("type") != "Feature":
            raise ValidationError(f"{path}: entry {pos} is not a Feature")
        geom = raw.get("geometry")
        if not isinstance(geom, dict):
            raise ValidationError(f"feature {fid}: missing geometry")
        gtype = geom.get("type")
        if gtype not in ("Point", "Polygon"):
            raise GeometryMismatch(f"feature {fid}: unsupported geometry type {gtype!r}")
        if expected_geometry != "any" and gtype != expected_geometry:
            raise GeometryMismatch(
                f"feature {fid}: expected {expected_geometry}, found {gtype}"
            )
        coords = geom.get("coordinates")
        if gtype == "Point":
            geometry = _parse_point(coords, fid)
        else:
            geometry = _parse_polygon(coords, fid)
        props = raw.get("properties") or {}
        if not isinstance(props, dict):
            raise ValidationError(f"feature {fid}: properties must be an object")
        features.append(Feature(id=fid, geometry=geometry, properties=props))
    return features


def features_to_geojson(features) -> dict:
    """Serialize features back to a FeatureCollection dict."""
    out = []
    for f in features:
        if isinstance(f.geometry, GeoPoint):
            geom = {"type": "Point", "coordinates": [f.geometry.lon, f.geometry.lat]}
        else:
            rings = [[[p.lon, p.lat] for p in f.geometry.exterior]]
            rings += [[[p.lon, p.lat] for p in h] for h in f.geometry.holes]
            geom = {"type": "Polygon", "coordinates": rings}
        out.append(
            {"type": "Feature", "id": f.id, "geometry": geom, "properties": f.properties}
        )
    return {"type": "FeatureCollection", "features": out}


# ---------------------------------------------------------------------------
# palm detections


def _confidence_of(props: dict) -> float | None:
    for key in CONFIDENCE_KEYS:
        if key in props:
            try:
                return float(props[key])
            except (TypeError, ValueError):
                return None
    return None


def load_detections(path, min_confidence: float = 0.0) -> tuple[list[PalmDetection], int]:
    """Load palm detections, dropping those below ``min_confidence``.

    Polygon detections are reduced to their area centroid. Features
    without a confidence property are treated as confidence 1.0 (the
    released detection files are already threshold-filtered upstream),
    unless a positive threshold makes the property load-bearing, in which
    case ``MissingConfidence`` is raised.

    Returns ``(kept_detections, excluded_count)``.
    """
    if not 0.0 <= min_confidence <= 1.0:
        raise ValueError("min_confidence must be in [0, 1]")
    features = load_feature_collection(path, "any")
    kept: list[PalmDetection] = []
    excluded = 0
    for f in features:
        conf = _confidence_of(f.properties)
        if conf is None:
            if min_confidence > 0.0:
                raise MissingConfidence(f"feature {f.id} lacks a confidence property")
            conf = 1.0
        if not 0.0 <= conf <= 1.0 or not math.isfinite(conf):
            raise ValidationError(f"feature {f.id}: confidence {conf} outside [0, 1]")
        if conf < min_confidence:
            excluded += 1
            continue
        if isinstance(f.geometry, GeoPoint):
            kept.append(PalmDetection(id=f.id, centroid=f.geometry, confidence=conf))
        else:
            centroid = geo.feature_centroid(f.geometry)
            if not geo.contains(f.geometry, centroid):
                raise ValidationError(f"feature {f.id}: centroid outside footprint")
            kept.append(
                PalmDetection(
                    id=f.id, centroid=centroid, confidence=conf, footprint=f.geometry
                )
            )
    return kept, excluded


# ---------------------------------------------------------------------------
# archaeological centroids, annotation cells, buildings


def _certainty_of(props: dict) -> str:
    for key, value in props.items():
        if "certain" in key.lower() and isinstance(value, str):
            v = value.strip().lower()
            if v in CERTAINTY_LEVELS:
                return v
    return "low"


def _source_of(props: dict) -> str:
    for key in ("Location_source", "location_source", "ID_source", "source"):
        if key in props and props[key] is not None:
            return str(props[key])
    return "N/A"


def load_centroids(path) -> list[ArchaeoCentroid]:
    """Load archaeological site centroids; polygon zones reduce to centroids."""
    features = load_feature_collection(path, "any")
    out: list[ArchaeoCentroid] = []
    seen: set[str] = set()
    for f in features:
        props = f.properties
        site = str(props.get("ID_site", props.get("id_site", f.id)))
        if site in seen:
            raise ValidationError(f"duplicate site id {site!r}")
        seen.add(site)
        location = geo.feature_centroid(f.geometry)
        out.append(
            ArchaeoCentroid(
                id_site=site,
                location=location,
                certainty=_certainty_of(props),
                source=_source_of(props),
            )
        )
    return out


def _numeric_prop(props: dict, needle: str) -> float | None:
    for key, value in props.items():
        if needle in key.lower():
            try:
                return float(value)
            except (TypeError, ValueError):
                continue
    return None


def load_annotation_cells(path, area_tolerance: float = 0.02) -> list[AnnotationCell]:
    """Load the annotated grid cells, checking stated against computed area."""
    features = load_feature_collection(path, "Polygon")
    cells: list[AnnotationCell] = []
    for f in features:
        computed = geo.polygon_area(f.geometry)
        stated = _numeric_prop(f.properties, "area")
        if stated is not None and stated > 0:
            if abs(stated - computed) > area_tolerance * stated:
                raise ValidationError(
                    f"cell {f.id}: stated area {stated:.1f} m2 differs from "
                    f"computed {computed:.1f} m2 by more than {area_tolerance:.0%}"
                )
        else:
            stated = computed
        perimeter = _numeric_prop(f.properties, "perimeter")
        if perimeter is None:
            ring = f.geometry.exterior
            perimeter = sum(
                geo.geodesic_distance(ring[i], ring[i + 1]) for i in range(len(ring) - 1)
            )
        cells.append(
            AnnotationCell(
                cell_id=f.id, polygon=f.geometry, area_m2=stated, perimeter_m=perimeter
            )
        )
    return cells


def load_buildings(path) -> list[BuildingFootprint]:
    features = load_feature_collection(path, "Polygon")
    return [
        BuildingFootprint(polygon=f.geometry, centroid=geo.feature_centroid(f.geometry))
        for f in features
    ]


# ---------------------------------------------------------------------------
# GBIF occurrence tables


def _sniff_delimiter(header: str) -> str:
    if "\t" in header:
        return "\t"
    if "," in header:
        return ","
    raise MissingColumn("could not find a tab or comma delimited header row")


def load_gbif_table(path) -> tuple[list[GbifOccurrence], int]:
    """Load occurrences from a TSV/CSV with decimalLatitude/decimalLongitude.

    Rows with missing or out-of-range coordinates are skipped and counted;
    structurally broken rows (wrong field count) abort the whole read.
    Returns ``(occurrences, skipped_count)``.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise EmptyTable(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = next(reader)
    columns = {name.strip(): i for i, name in enumerate(header)}
    for required in ("decimalLatitude", "decimalLongitude"):
        if required not in columns:
            raise MissingColumn(f"{path}: missing column {required!r}")
    lat_i = columns["decimalLatitude"]
    lon_i = columns["decimalLongitude"]
    elev_i = columns.get("elevation")
    taxon_i = columns.get("species")

    out: list[GbifOccurrence] = []
    skipped = 0
    n_rows = 0
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and row[0].strip() == ""):
            continue  # blank line
        n_rows += 1
        if len(row) != len(header):
            raise ParseError(
                f"{path}: line {row_no} has {len(row)} fields, header has {len(header)}"
            )
        try:
            lat = float(row[lat_i])
            lon = float(row[lon_i])
            location = GeoPoint(lon, lat)
        except (TypeError, ValueError):
            skipped += 1
            continue
        elevation = None
        if elev_i is not None and row[elev_i].strip():
            try:
                elevation = float(row[elev_i])
            except ValueError:
                elevation = None
        taxon = row[taxon_i].strip() if taxon_i is not None else ""
        out.append(GbifOccurrence(location=location, elevation_m=elevation, taxon=taxon))
    if n_rows == 0:
        raise EmptyTable(f"{path}: no data rows")
    return out, skipped
