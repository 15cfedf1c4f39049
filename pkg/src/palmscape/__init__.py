"""Geospatial cluster and density analysis of detected palm trees.

The package turns point detections of palm crowns into spatial clusters,
scores localized palm density around reference points, compares reference
sets against sampled controls with bootstrap confidence intervals, and
relates palm distribution to buildings and terrain elevation.
"""

__version__ = "0.1.0"

from .geo import GeoPoint, GeoPolygon, GridSpec, LocalXY
from .cluster import HdbscanClusterer, NOISE
from .score import IdwScorer

__all__ = [
    "GeoPoint",
    "GeoPolygon",
    "GridSpec",
    "LocalXY",
    "HdbscanClusterer",
    "IdwScorer",
    "NOISE",
    "__version__",
]
