"""Pipeline CLI: validate inputs, run analysis stages, emit reports.

Subcommands mirror the analysis chain: ``validate``, ``cluster``, ``idw``,
``bootstrap``, ``grid-corr``, ``elevation``, ``deteval``, ``synth``,
``run-all`` and ``report``. A JSON config file carries input paths and
parameters; command-line flags override config keys. Analytic outputs
(CSV/JSON/GeoJSON/SVG) are byte-deterministic for a given config and seed;
``manifest.json`` records digests of everything written plus per-stage
timings (the timings make the manifest itself the one non-reproducible
file). Logs go to standard error only.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, geo, ingest
from . import cluster as cluster_mod
from . import deteval as deteval_mod
from . import raster as raster_mod
from . import report as report_mod
from . import score as score_mod
from . import stats as stats_mod
from . import synth as synth_mod
from .errors import NoCoverage, PalmscapeError, VoidCell
from .geo import GeoPoint, GridSpec
from .report import fnum

LOG = logging.getLogger("palmscape")

_INPUT_KEYS = (
    "detections",
    "centroids",
    "study_area",
    "labels",
    "labeled_area",
    "buildings",
    "gbif",
    "srtm_dir",
)


@dataclass
class RunConfig:
    """Resolved inputs and parameters for one pipeline run."""

    detections: str | None = None
    centroids: str | None = None
    study_area: str | None = None
    labels: str | None = None
    labeled_area: str | None = None
    buildings: str | None = None
    gbif: str | None = None
    srtm_dir: str | None = None
    out_dir: str = "out"

    confidence: float = 0.4
    min_cluster_size: int = 100
    min_samples: int | None = None
    selection: str = "excess_of_mass"
    radius: float = 1000.0
    decay_w: float = 1.0
    cluster_only: bool = False
    bootstrap_samples: int = 1000
    bootstrap_size: int = 17
    ci_level: float = 0.80
    grid_cell_m: float = 200.0
    n_controls: int = 100
    buffer_m: float = 1000.0
    iou_threshold: float = 0.5
    confidence_thresholds: tuple = (0.2, 0.3, 0.4)
    seed: int = 0
    threads: int = 1
    synth: dict = field(default_factory=dict)

    @classmethod
    def load(cls, config_path=None, overrides=None) -> "RunConfig":
        data: dict = {}
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                data.update(json.load(fh))
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise PalmscapeError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.confidence_thresholds = tuple(cfg.confidence_thresholds)
        return cfg

    def resolved(self) -> dict:
        out = asdict(self)
        out["confidence_thresholds"] = list(self.confidence_thresholds)
        return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class Pipeline:
    """Shared state across stages: loaded inputs, projection, manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        os.makedirs(cfg.out_dir, exist_ok=True)
        self.manifest: dict = {
            "tool": "palmscape",
            "version": __version__,
            "config": cfg.resolved(),
            "config_hash": hashlib.sha256(
                json.dumps(cfg.resolved(), sort_keys=True).encode()
            ).hexdigest(),
            "inputs": {},
            "stages": [],
            "warnings": [],
        }
        for key in _INPUT_KEYS:
            path = getattr(cfg, key)
            if path and os.path.isfile(path):
                self.manifest["inputs"][key] = _sha256(path)
        self._cache: dict = {}

    # --- lazy loaded inputs ---

    def detections(self):
        if "detections" not in self._cache:
            if not self.cfg.detections:
                raise PalmscapeError("config needs a 'detections' path")
            dets, excluded = ingest.load_detections(
                self.cfg.detections, self.cfg.confidence
            )
            LOG.info(
                "loaded %d detections (%d below confidence %.2f)",
                len(dets),
                excluded,
                self.cfg.confidence,
            )
            self._cache["detections"] = (dets, excluded)
        return self._cache["detections"][0]

    def centroid_records(self):
        if "centroids" not in self._cache:
            if not self.cfg.centroids:
                raise PalmscapeError("config needs a 'centroids' path")
            self._cache["centroids"] = ingest.load_centroids(self.cfg.centroids)
        return self._cache["centroids"]

    def study_polygon(self):
        if "study_area" not in self._cache:
            if self.cfg.study_area:
                features = ingest.load_feature_collection(self.cfg.study_area, "Polygon")
                self._cache["study_area"] = features[0].geometry if features else None
            else:
                self._cache["study_area"] = None
        return self._cache["study_area"]

    def origin(self) -> GeoPoint:
        """Projection origin: study-area bbox centre, else detections bbox centre."""
        if "origin" not in self._cache:
            poly = self.study_polygon()
            if poly is not None:
                self._cache["origin"] = poly.anchor()
            else:
                pts = np.array(
                    [(d.centroid.lon, d.centroid.lat) for d in self.detections()]
                )
                self._cache["origin"] = GeoPoint(
                    float((pts[:, 0].min() + pts[:, 0].max()) / 2),
                    float((pts[:, 1].min() + pts[:, 1].max()) / 2),
                )
        return self._cache["origin"]

    def palm_lonlat(self) -> np.ndarray:
        return np.array([(d.centroid.lon, d.centroid.lat) for d in self.detections()])

    def palm_xy(self) -> np.ndarray:
        if "palm_xy" not in self._cache:
            ll = self.palm_lonlat()
            xs, ys = geo.project_lonlat(ll[:, 0], ll[:, 1], self.origin())
            self._cache["palm_xy"] = np.column_stack([xs, ys])
        return self._cache["palm_xy"]

    def cluster_result(self):
        if "cluster_result" not in self._cache:
            self._cache["cluster_result"] = cluster_mod.cluster_detections(
                self.palm_lonlat(),
                self.origin(),
                min_cluster_size=self.cfg.min_cluster_size,
                min_samples=self.cfg.min_samples,
                selection=self.cfg.selection,
            )
        return self._cache["cluster_result"]

    def scorer(self) -> score_mod.IdwScorer:
        if "scorer" not in self._cache:
            self._cache["scorer"] = score_mod.IdwScorer(
                radius=self.cfg.radius, decay_w=self.cfg.decay_w
            ).fit(self.palm_xy())
        return self._cache["scorer"]

    def srtm_tiles(self):
        if "srtm" not in self._cache:
            if not self.cfg.srtm_dir:
                raise PalmscapeError("config needs an 'srtm_dir' path")
            self._cache["srtm"] = raster_mod.load_tile_dir(self.cfg.srtm_dir)
        return self._cache["srtm"]

    # --- bookkeeping ---

    def _out(self, name: str) -> str:
        return os.path.join(self.cfg.out_dir, name)

    def record_stage(self, name: str, seconds: float, outputs, warnings=()):
        self.manifest["stages"].append(
            {
                "name": name,
                "seconds": round(seconds, 3),
                "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
                "warnings": list(warnings),
            }
        )

    def write_manifest(self):
        report_mod.write_json(self._out("manifest.json"), self.manifest)

    def run_stage(self, name: str, fn) -> dict:
        LOG.info("stage %s: start", name)
        t0 = time.perf_counter()
        outputs, summary, warnings = fn()
        self.record_stage(name, time.perf_counter() - t0, outputs, warnings)
        LOG.info("stage %s: done in %.2fs", name, time.perf_counter() - t0)
        return summary

    # --- stages ---

    def stage_validate(self):
        checks = []
        errors = []

        def check(name, fn):
            try:
                summary = fn()
                checks.append({"input": name, "ok": True, **summary})
            except (PalmscapeError, OSError) as exc:
                checks.append({"input": name, "ok": False, "error": str(exc)})
                errors.append({"input": name, "error": str(exc)})

        if self.cfg.detections:
            def load_dets():
                dets, excluded = ingest.load_detections(
                    self.cfg.detections, self.cfg.confidence
                )
                return {"count": len(dets), "excluded": excluded}
            check("detections", load_dets)
        if self.cfg.centroids:
            check(
                "centroids",
                lambda: {"count": len(ingest.load_centroids(self.cfg.centroids))},
            )
        if self.cfg.study_area:
            def load_area():
                features = ingest.load_feature_collection(self.cfg.study_area, "Polygon")
                area = sum(geo.polygon_area(f.geometry) for f in features)
                return {"count": len(features), "area_km2": area / 1e6}
            check("study_area", load_area)
        if self.cfg.labels:
            check(
                "labels",
                lambda: {
                    "count": len(ingest.load_feature_collection(self.cfg.labels, "Polygon"))
                },
            )
        if self.cfg.labeled_area:
            check(
                "labeled_area",
                lambda: {
                    "count": len(ingest.load_annotation_cells(self.cfg.labeled_area))
                },
            )
        if self.cfg.buildings:
            check(
                "buildings",
                lambda: {"count": len(ingest.load_buildings(self.cfg.buildings))},
            )
        if self.cfg.gbif:
            def load_gbif():
                occ, skipped = ingest.load_gbif_table(self.cfg.gbif)
                return {"count": len(occ), "skipped_rows": skipped}
            check("gbif", load_gbif)
        if self.cfg.srtm_dir:
            check(
                "srtm_dir",
                lambda: {"count": len(raster_mod.load_tile_dir(self.cfg.srtm_dir))},
            )

        summary = {"checks": checks, "errors": errors, "ok": not errors}
        path = self._out("validation.json")
        report_mod.write_json(path, summary)
        return [path], summary, [e["error"] for e in errors]

    def stage_cluster(self):
        result = self.cluster_result()
        gj = cluster_mod.clusters_to_geojson(result)
        gj_path = self._out("clusters.geojson")
        report_mod.write_json(gj_path, gj)

        dets = self.detections()
        rows = [
            (dets[i].id, str(int(result.labels[i])))
            for i in range(len(dets))
        ]
        csv_path = self._out("cluster_labels.csv")
        report_mod.write_csv(csv_path, ["id", "cluster_id"], rows)

        associations = []
        if self.cfg.centroids:
            associations = cluster_mod.associate_sites(result, self.centroid_records())
        summary = {
            "n_points": int(result.labels.size),
            "n_noise": int(np.count_nonzero(result.labels == cluster_mod.NOISE)),
            "clusters": [
                {
                    "cluster_id": info.cluster_id,
                    "size": int(info.member_ids.size),
                    "area_m2": info.area_m2,
                    "stability": info.stability,
                }
                for info in result.clusters
            ],
            "site_associations": [
                {"cluster_id": a.cluster_id, "site_ids": list(a.site_ids)}
                for a in associations
            ],
        }
        sum_path = self._out("clusters_summary.json")
        report_mod.write_json(sum_path, summary)
        return [gj_path, csv_path, sum_path], summary, []

    def _score_points(self, lonlat: np.ndarray):
        """IDW score per point, optionally restricted to the containing cluster."""
        xs, ys = geo.project_lonlat(lonlat[:, 0], lonlat[:, 1], self.origin())
        centers = np.column_stack([xs, ys])
        if not self.cfg.cluster_only:
            scorer = self.scorer()
            gs = _pmap(
                lambda c: scorer._score_one(c), centers, self.cfg.threads
            )
            return [g for g, _ in gs], [n for _, n in gs]

        result = self.cluster_result()
        xy = self.palm_xy()
        scorers: dict[int, score_mod.IdwScorer] = {}
        for info in result.clusters:
            scorers[info.cluster_id] = score_mod.IdwScorer(
                radius=self.cfg.radius, decay_w=self.cfg.decay_w
            ).fit(xy[info.member_ids])

        def one(i):
            p = GeoPoint(float(lonlat[i, 0]), float(lonlat[i, 1]))
            for info in result.clusters:
                if geo.contains(info.hull, p):
                    return scorers[info.cluster_id]._score_one(centers[i])
            return 0.0, 0

        gs = _pmap(one, range(len(centers)), self.cfg.threads)
        return [g for g, _ in gs], [n for _, n in gs]

    def stage_idw(self):
        centroids = self.centroid_records()
        lonlat = np.array([(c.location.lon, c.location.lat) for c in centroids])
        gs, counts = self._score_points(lonlat)
        rows = [
            (c.id_site, fnum(g), str(n))
            for c, g, n in zip(centroids, gs, counts)
        ]
        csv_path = self._out("idw.csv")
        report_mod.write_csv(csv_path, ["id", "G", "n_within"], rows)
        summary = {
            "radius": self.cfg.radius,
            "decay_w": self.cfg.decay_w,
            "cluster_only": self.cfg.cluster_only,
            "scores": [
                {"id": c.id_site, "G": g, "n_within": n}
                for c, g, n in zip(centroids, gs, counts)
            ],
        }
        json_path = self._out("idw.json")
        report_mod.write_json(json_path, summary)
        return [csv_path, json_path], summary, []

    def stage_bootstrap(self):
        result = self.cluster_result()
        if not result.clusters:
            raise PalmscapeError("no clusters found; bootstrap comparison undefined")
        centroids = self.centroid_records()
        largest = max(result.clusters, key=lambda c: c.member_ids.size)
        site_locs = [
            c for c in centroids if geo.contains(largest.hull, c.location)
        ]
        if not site_locs:
            raise PalmscapeError("largest cluster hull contains no centroids")
        associations = cluster_mod.associate_sites(result, centroids)
        site_bearing = {a.cluster_id for a in associations if a.site_ids}
        hulls_without_sites = [
            info.hull
            for info in result.clusters
            if info.cluster_id not in site_bearing
        ]

        warnings = []
        controls_outside = score_mod.sample_controls(
            [largest.hull],
            [c.location for c in site_locs],
            self.cfg.n_controls,
            seed=self.cfg.seed,
            constraint=score_mod.CONSTRAINT_OUTSIDE_BUFFERS,
            buffer_m=self.cfg.buffer_m,
        )
        sets = [
            (
                "sites_largest_cluster",
                np.array([(c.location.lon, c.location.lat) for c in site_locs]),
            ),
            (
                "controls_outside_buffers",
                np.array([(p.lon, p.lat) for p in controls_outside.points]),
            ),
        ]
        controls_nosites = None
        if hulls_without_sites:
            controls_nosites = score_mod.sample_controls(
                hulls_without_sites,
                [],
                self.cfg.n_controls,
                seed=self.cfg.seed + 1,
                constraint=score_mod.CONSTRAINT_NO_SITES,
            )
            sets.append(
                (
                    "controls_no_site_clusters",
                    np.array([(p.lon, p.lat) for p in controls_nosites.points]),
                )
            )
        else:
            warnings.append("no clusters without sites; third comparison set skipped")

        records = []
        for offset, (name, lonlat) in enumerate(sets):
            gs, _ = self._score_points(lonlat)
            boot = stats_mod.bootstrap_mean_ci(
                gs,
                samples=self.cfg.bootstrap_samples,
                sample_size=self.cfg.bootstrap_size,
                ci_level=self.cfg.ci_level,
                seed=self.cfg.seed + 10 + offset,
            )
            records.append(
                {
                    "name": name,
                    "n_points": int(len(gs)),
                    "observed_mean": boot.observed_mean,
                    "ci_low": boot.ci_low,
                    "ci_high": boot.ci_high,
                    "ci_level": boot.ci_level,
                    "samples": boot.samples,
                    "sample_size": boot.sample_size,
                    "seed": boot.seed,
                }
            )

        outputs = []
        gj = ingest.features_to_geojson(
            [
                ingest.Feature(
                    id=f"control-{i}",
                    geometry=p,
                    properties={"seed": controls_outside.seed},
                )
                for i, p in enumerate(controls_outside.points)
            ]
        )
        path = self._out("controls_outside.geojson")
        report_mod.write_json(path, gj)
        outputs.append(path)
        if controls_nosites is not None:
            gj = ingest.features_to_geojson(
                [
                    ingest.Feature(
                        id=f"control-{i}",
                        geometry=p,
                        properties={"seed": controls_nosites.seed},
                    )
                    for i, p in enumerate(controls_nosites.points)
                ]
            )
            path = self._out("controls_nosites.geojson")
            report_mod.write_json(path, gj)
            outputs.append(path)

        summary = {
            "largest_cluster_id": largest.cluster_id,
            "largest_cluster_size": int(largest.member_ids.size),
            "n_sites_in_largest": len(site_locs),
            "sets": records,
        }
        json_path = self._out("bootstrap.json")
        report_mod.write_json(json_path, summary)
        outputs.append(json_path)
        csv_path = self._out("bootstrap.csv")
        report_mod.write_csv(
            csv_path,
            ["name", "n_points", "observed_mean", "ci_low", "ci_high"],
            [
                (
                    r["name"],
                    str(r["n_points"]),
                    fnum(r["observed_mean"]),
                    fnum(r["ci_low"]),
                    fnum(r["ci_high"]),
                )
                for r in records
            ],
        )
        outputs.append(csv_path)
        return outputs, summary, warnings

    def _study_grid(self) -> GridSpec:
        poly = self.study_polygon()
        if poly is not None:
            min_lon, min_lat, max_lon, max_lat = poly.bbox()
        else:
            ll = self.palm_lonlat()
            min_lon, min_lat = ll[:, 0].min(), ll[:, 1].min()
            max_lon, max_lat = ll[:, 0].max(), ll[:, 1].max()
        sw = GeoPoint(float(min_lon), float(min_lat))
        xs, ys = geo.project_lonlat(np.array([max_lon]), np.array([max_lat]), sw)
        n_cols = max(1, int(np.ceil(float(xs[0]) / self.cfg.grid_cell_m)))
        n_rows = max(1, int(np.ceil(float(ys[0]) / self.cfg.grid_cell_m)))
        return GridSpec(origin=sw, n_cols=n_cols, n_rows=n_rows, cell_size=self.cfg.grid_cell_m)

    def stage_grid_corr(self):
        if not self.cfg.buildings:
            raise PalmscapeError("config needs a 'buildings' path")
        buildings = ingest.load_buildings(self.cfg.buildings)
        grid = self._study_grid()
        palm_counts, palms_outside = score_mod.count_per_cell(
            [d.centroid for d in self.detections()], grid
        )
        bldg_counts, bldg_outside = score_mod.count_per_cell(
            [b.centroid for b in buildings], grid
        )

        poly = self.study_polygon()
        cells = []
        for row in range(grid.n_rows):
            for col in range(grid.n_cols):
                if poly is not None:
                    cx = (col + 0.5) * grid.cell_size
                    cy = (row + 0.5) * grid.cell_size
                    lon, lat = geo.unproject_xy(cx, cy, grid.origin)
                    center = GeoPoint(float(lon), float(lat))
                    if not geo.contains(poly, center):
                        continue
                cells.append((col, row))

        palms = np.array([palm_counts.get(c, 0) for c in cells], dtype=np.float64)
        bldgs = np.array([bldg_counts.get(c, 0) for c in cells], dtype=np.float64)
        corr = stats_mod.spearman(palms, bldgs)

        rows = [
            (str(c), str(r), str(int(p)), str(int(b)))
            for (c, r), p, b in zip(cells, palms, bldgs)
        ]
        csv_path = self._out("grid_counts.csv")
        report_mod.write_csv(csv_path, ["col", "row", "palms", "buildings"], rows)
        summary = {
            "cell_size_m": grid.cell_size,
            "n_cells": len(cells),
            "palms_outside_grid": palms_outside,
            "buildings_outside_grid": bldg_outside,
            "spearman_rho": corr.statistic,
            "p_value": corr.p_value,
        }
        json_path = self._out("grid_corr.json")
        report_mod.write_json(json_path, summary)
        return [csv_path, json_path], summary, []

    def stage_elevation(self):
        tiles = self.srtm_tiles()
        result = self.cluster_result()
        centroids = self.centroid_records()
        palms = [d.centroid for d in self.detections()]
        samples, dropped = raster_mod.tag_elevation_subsets(
            palms, result, centroids, tiles, buffers_r=self.cfg.buffer_m
        )
        warnings = []
        if dropped:
            warnings.append(f"{dropped} palms without raster coverage dropped")

        groups: dict[str, list[float]] = {tag: [] for tag in raster_mod.SUBSET_TAGS}
        for s in samples:
            groups[s.subset_tag].append(s.elevation_m)

        gbif_skipped = 0
        if self.cfg.gbif:
            occurrences, bad_rows = ingest.load_gbif_table(self.cfg.gbif)
            raw = []
            for occ in occurrences:
                try:
                    try:
                        elev = raster_mod.sample_elevation(tiles, occ.location, "bilinear")
                    except VoidCell:
                        elev = raster_mod.sample_elevation(tiles, occ.location, "nearest")
                except (NoCoverage, VoidCell):
                    if occ.elevation_m is not None:
                        elev = occ.elevation_m
                    else:
                        gbif_skipped += 1
                        continue
                raw.append(elev)
            if bad_rows:
                warnings.append(f"{bad_rows} GBIF rows skipped on load")
            if gbif_skipped:
                warnings.append(f"{gbif_skipped} GBIF records without elevation dropped")
            if len(raw) >= 4:
                kept, removed = stats_mod.iqr_filter(raw)
                groups[raster_mod.SUBSET_GBIF_BASELINE] = kept.tolist()
                if removed:
                    warnings.append(f"{removed} GBIF baseline outliers removed by IQR filter")
            else:
                groups[raster_mod.SUBSET_GBIF_BASELINE] = raw

        # centroid elevations for the site summary
        centroid_elevs = {}
        for c in centroids:
            try:
                try:
                    elev = raster_mod.sample_elevation(tiles, c.location, "bilinear")
                except VoidCell:
                    elev = raster_mod.sample_elevation(tiles, c.location, "nearest")
                centroid_elevs[c.id_site] = float(elev)
            except (NoCoverage, VoidCell):
                continue

        nonempty = {k: v for k, v in groups.items() if v}
        test_groups = [v for _, v in sorted(nonempty.items())]
        kw = None
        dunn_payload = None
        outputs = []
        if len(test_groups) >= 2:
            kw_result = stats_mod.kruskal_wallis(test_groups)
            kw = {
                "H": kw_result.statistic,
                "p_value": kw_result.p_value,
                "df": kw_result.df,
                "tie_correction": kw_result.tie_correction,
            }
            dunn = stats_mod.dunn_posthoc(test_groups, adjustment="holm")
            names = sorted(nonempty)
            dunn_payload = {
                "labels": names,
                "adjustment": dunn.adjustment,
                "z": [[float(v) for v in row] for row in dunn.z],
                "p_adjusted": [[float(v) for v in row] for row in dunn.p_adjusted],
            }
            dunn_rows = []
            for i, a in enumerate(names):
                for j, b in enumerate(names):
                    if i < j:
                        dunn_rows.append(
                            (a, b, fnum(dunn.z[i, j]), fnum(dunn.p_adjusted[i, j]))
                        )
            dunn_csv = self._out("dunn.csv")
            report_mod.write_csv(dunn_csv, ["group_a", "group_b", "z", "p_adjusted"], dunn_rows)
            outputs.append(dunn_csv)

        kde_curves = {}
        for name, values in sorted(nonempty.items()):
            if len(values) >= 2 and float(np.std(values, ddof=1)) > 0:
                vmin, vmax = min(values), max(values)
                pad = 0.1 * (vmax - vmin or 1.0)
                xs = np.linspace(vmin - pad, vmax + pad, 64)
                dens = stats_mod.gaussian_kde(values, xs)
                kde_curves[name] = {
                    "x": [float(v) for v in xs],
                    "density": [float(v) for v in dens],
                }

        csv_rows = [
            (
                fnum(s.location.lon),
                fnum(s.location.lat),
                fnum(s.elevation_m),
                s.subset_tag,
            )
            for s in samples
        ]
        samples_csv = self._out("elevation_samples.csv")
        report_mod.write_csv(samples_csv, ["lon", "lat", "elevation_m", "subset"], csv_rows)
        outputs.append(samples_csv)

        summary = {
            "n_samples": len(samples),
            "n_dropped": dropped,
            "subset_summaries": {
                name: report_mod.summarize_values(values)
                for name, values in sorted(nonempty.items())
            },
            "centroid_elevations": centroid_elevs,
            "kruskal_wallis": kw,
            "dunn": dunn_payload,
            "kde": kde_curves,
        }
        json_path = self._out("elevation.json")
        report_mod.write_json(json_path, summary)
        outputs.append(json_path)
        return outputs, summary, warnings

    def stage_deteval(self):
        if not self.cfg.labels:
            raise PalmscapeError("config needs a 'labels' path")
        label_features = ingest.load_feature_collection(self.cfg.labels, "Polygon")
        labels = [f.geometry for f in label_features]
        preds, _ = ingest.load_detections(self.cfg.detections, 0.0)

        if self.cfg.labeled_area:
            cells = ingest.load_annotation_cells(self.cfg.labeled_area)
            kept = []
            for p in preds:
                for cell in cells:
                    if geo.contains(cell.polygon, p.centroid):
                        kept.append(p)
                        break
            preds = kept

        cfg = deteval_mod.MatchConfig(
            iou_threshold=self.cfg.iou_threshold,
            confidence_thresholds=self.cfg.confidence_thresholds,
        )
        points = deteval_mod.match_and_score(preds, labels, cfg)
        rows = [
            (
                fnum(p.threshold),
                str(p.true_positives),
                str(p.false_positives),
                str(p.false_negatives),
                fnum(p.precision),
                fnum(p.recall),
            )
            for p in points
        ]
        csv_path = self._out("deteval.csv")
        report_mod.write_csv(
            csv_path,
            ["threshold", "tp", "fp", "fn", "precision", "recall"],
            rows,
        )
        summary = {
            "iou_threshold": self.cfg.iou_threshold,
            "n_labels": len(labels),
            "n_predictions": len(preds),
            "points": [
                {
                    "threshold": p.threshold,
                    "tp": p.true_positives,
                    "fp": p.false_positives,
                    "fn": p.false_negatives,
                    "precision": p.precision,
                    "recall": p.recall,
                    "zero_prediction_warning": p.zero_prediction_warning,
                }
                for p in points
            ],
        }
        json_path = self._out("deteval.json")
        report_mod.write_json(json_path, summary)
        return [csv_path, json_path], summary, []

    def stage_synth(self):
        opts = dict(self.cfg.synth)
        extent_km = float(opts.pop("extent_km", 20.0))
        parent_centers = opts.pop("parent_centers", None)
        parent_intensity = opts.pop("parent_intensity", None)
        if parent_centers is None and parent_intensity is None:
            parent_intensity = 0.05
        params = synth_mod.ThomasParams(
            extent=(0.0, 0.0, extent_km * 1000.0, extent_km * 1000.0),
            mean_offspring=float(opts.pop("mean_offspring", 150.0)),
            dispersion_m=float(opts.pop("dispersion_m", 50.0)),
            background_intensity=float(opts.pop("background_intensity", 1.0)),
            parent_centers=tuple(map(tuple, parent_centers)) if parent_centers else None,
            parent_intensity=parent_intensity,
            seed=int(opts.pop("seed", self.cfg.seed)),
        )
        if opts:
            raise PalmscapeError(f"unknown synth options: {sorted(opts)}")
        landscape = synth_mod.generate(params)
        poly = self.study_polygon()
        origin = poly.anchor() if poly is not None else GeoPoint(0.0, 0.0)
        gj = synth_mod.to_detection_geojson(landscape, origin)
        gj_path = self._out("synth_detections.geojson")
        report_mod.write_json(gj_path, gj)
        truth_rows = [
            (f"synth-{i}", fnum(landscape.points[i, 0]), fnum(landscape.points[i, 1]),
             str(int(landscape.parent_of[i])))
            for i in range(landscape.points.shape[0])
        ]
        truth_path = self._out("synth_truth.csv")
        report_mod.write_csv(truth_path, ["id", "x_m", "y_m", "parent"], truth_rows)
        summary = {
            "n_points": int(landscape.points.shape[0]),
            "n_parents": int(landscape.parents.shape[0]),
            "n_background": int(np.count_nonzero(landscape.parent_of == synth_mod.BACKGROUND)),
            "n_discarded": landscape.n_discarded,
            "seed": params.seed,
        }
        sum_path = self._out("synth_summary.json")
        report_mod.write_json(sum_path, summary)
        return [gj_path, truth_path, sum_path], summary, []


# ---------------------------------------------------------------------------
# argument parsing and dispatch

_STAGE_ORDER = (
    "validate",
    "cluster",
    "idw",
    "bootstrap",
    "grid-corr",
    "elevation",
    "deteval",
)


def _stage_fn(pipe: Pipeline, name: str):
    return {
        "validate": pipe.stage_validate,
        "cluster": pipe.stage_cluster,
        "idw": pipe.stage_idw,
        "bootstrap": pipe.stage_bootstrap,
        "grid-corr": pipe.stage_grid_corr,
        "elevation": pipe.stage_elevation,
        "deteval": pipe.stage_deteval,
        "synth": pipe.stage_synth,
    }[name]


def _stage_inputs_present(cfg: RunConfig, name: str) -> bool:
    need = {
        "validate": (),
        "cluster": ("detections",),
        "idw": ("detections", "centroids"),
        "bootstrap": ("detections", "centroids"),
        "grid-corr": ("detections", "buildings"),
        "elevation": ("detections", "centroids", "srtm_dir"),
        "deteval": ("detections", "labels"),
    }[name]
    return all(getattr(cfg, key) for key in need)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="palmscape",
        description="Cluster palm detections and score density around archaeological sites.",
    )
    parser.add_argument("--version", action="version", version=f"palmscape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = _STAGE_ORDER + ("synth", "run-all", "report")
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", dest="out_dir", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--confidence", type=float)
        p.add_argument("--min-cluster-size", dest="min_cluster_size", type=int)
        p.add_argument("--radius", type=float)
        p.add_argument("--decay-w", dest="decay_w", type=float)
        p.add_argument("--ci-level", dest="ci_level", type=float)
        p.add_argument(
            "--cluster-only",
            dest="cluster_only",
            action="store_const",
            const=True,
            default=None,
        )
        p.add_argument("--threads", type=int)
        for key in _INPUT_KEYS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config") and v is not None
    }
    try:
        cfg = RunConfig.load(args.config, overrides)
    except (OSError, json.JSONDecodeError, PalmscapeError) as exc:
        LOG.error("config error: %s", exc)
        return 2

    command = args.command
    try:
        if command == "report":
            summary = report_mod.emit_report(cfg.out_dir)
            json.dump(summary, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0

        pipe = Pipeline(cfg)
        if command == "run-all":
            for name in _STAGE_ORDER:
                if not _stage_inputs_present(cfg, name):
                    LOG.warning("skipping stage %s: inputs not configured", name)
                    pipe.manifest["warnings"].append(f"stage {name} skipped: inputs missing")
                    continue
                summary = pipe.run_stage(name, _stage_fn(pipe, name))
                if name == "validate" and not summary["ok"]:
                    pipe.write_manifest()
                    LOG.error("validation failed; aborting run-all")
                    return 2
            pipe.write_manifest()
            return 0

        summary = pipe.run_stage(command, _stage_fn(pipe, command))
        pipe.write_manifest()
        if command == "validate":
            json.dump(summary, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0 if summary["ok"] else 2
        return 0
    except PalmscapeError as exc:
        LOG.error("%s failed: %s", command, exc)
        return 1
    except OSError as exc:
        LOG.error("%s failed: %s", command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
