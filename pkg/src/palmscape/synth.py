"""Synthetic landscapes: clustered point processes with known ground truth.

Parents (sites) scatter Poisson-distributed offspring with isotropic
Gaussian dispersion over a rectangular extent, on top of homogeneous
Poisson background noise. Because every generated point carries its parent
tag, these landscapes act as oracles for the clustering and inference
chain: cluster recovery, density scoring, and the bootstrap comparison can
all be checked against a configurable effect size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geo
from .cluster import HdbscanClusterer
from .geo import GeoPoint
from .score import IdwScorer
from .stats import bootstrap_mean_ci

BACKGROUND = -1


@dataclass(frozen=True)
class ThomasParams:
    """Clustered point process parameters over a local-metre extent.

    ``parent_centers`` pins parent locations; otherwise parents are drawn
    as a Poisson process of intensity ``parent_intensity`` per km^2.
    Offspring counts are Poisson(``mean_offspring``) with isotropic
    Gaussian offsets of scale ``dispersion_m``; offspring falling outside
    the extent are discarded and counted.
    """

    extent: tuple  # (x0, y0, x1, y1) metres
    mean_offspring: float = 100.0
    dispersion_m: float = 50.0
    background_intensity: float = 0.0  # points per km^2
    parent_centers: tuple | None = None
    parent_intensity: float | None = None  # parents per km^2
    seed: int = 0

    def __post_init__(self):
        x0, y0, x1, y1 = self.extent
        if x1 <= x0 or y1 <= y0:
            raise ValueError("extent must have positive width and height")
        if self.mean_offspring < 0:
            raise ValueError("mean_offspring must be >= 0")
        if self.dispersion_m <= 0:
            raise ValueError("dispersion_m must be > 0")
        if self.background_intensity < 0:
            raise ValueError("background_intensity must be >= 0")
        if self.parent_centers is None and self.parent_intensity is None:
            raise ValueError("give parent_centers or parent_intensity")


@dataclass(frozen=True)
class SynthLandscape:
    points: np.ndarray  # (n, 2) metres
    parent_of: np.ndarray  # (n,) parent index, BACKGROUND for noise
    parents: np.ndarray  # (k, 2)
    n_discarded: int
    seed: int


def generate(params: ThomasParams) -> SynthLandscape:
    """Draw one landscape; reproducible for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    x0, y0, x1, y1 = (float(v) for v in params.extent)
    area_km2 = (x1 - x0) * (y1 - y0) / 1e6

    if params.parent_centers is not None:
        parents = np.asarray(params.parent_centers, dtype=np.float64).reshape(-1, 2)
    else:
        k = rng.poisson(params.parent_intensity * area_km2)
        parents = np.column_stack(
            [rng.uniform(x0, x1, k), rng.uniform(y0, y1, k)]
        )

    points = []
    tags = []
    n_discarded = 0
    for i, (px, py) in enumerate(parents):
        count = rng.poisson(params.mean_offspring)
        if count == 0:
            continue
        offsets = rng.normal(0.0, params.dispersion_m, size=(count, 2))
        xy = offsets + (px, py)
        keep = (
            (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
        )
        n_discarded += int(np.count_nonzero(~keep))
        xy = xy[keep]
        points.append(xy)
        tags.append(np.full(xy.shape[0], i, dtype=np.intp))

    n_background = rng.poisson(params.background_intensity * area_km2)
    if n_background:
        bg = np.column_stack(
            [rng.uniform(x0, x1, n_background), rng.uniform(y0, y1, n_background)]
        )
        points.append(bg)
        tags.append(np.full(n_background, BACKGROUND, dtype=np.intp))

    if points:
        all_points = np.concatenate(points)
        all_tags = np.concatenate(tags)
    else:
        all_points = np.empty((0, 2))
        all_tags = np.empty(0, dtype=np.intp)
    return SynthLandscape(
        points=all_points,
        parent_of=all_tags,
        parents=parents,
        n_discarded=n_discarded,
        seed=params.seed,
    )


def to_detection_geojson(landscape: SynthLandscape, origin: GeoPoint) -> dict:
    """Export a landscape in the detection GeoJSON schema (confidence 1.0)."""
    lons, lats = geo.unproject_xy(landscape.points[:, 0], landscape.points[:, 1], origin)
    features = []
    for i, (lon, lat) in enumerate(zip(lons, lats)):
        features.append(
            {
                "type": "Feature",
                "id": f"synth-{i}",
                "geometry": {"type": "Point", "coordinates": [float(lon), float(lat)]},
                "properties": {
                    "confidence": 1.0,
                    "parent": int(landscape.parent_of[i]),
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


# ---------------------------------------------------------------------------
# power experiment


@dataclass(frozen=True)
class EffectSpec:
    mu_site: float
    mu_control: float
    dispersion_m: float = 50.0
    background_intensity: float = 0.5  # per km^2


@dataclass(frozen=True)
class PowerPipelineParams:
    n_site_parents: int = 8
    n_control_parents: int = 8
    extent: tuple = (0.0, 0.0, 40_000.0, 40_000.0)
    min_cluster_size: int = 50
    radius: float = 1000.0
    decay_w: float = 1.0
    samples: int = 1000
    sample_size: int = 17
    ci_level: float = 0.80


@dataclass(frozen=True)
class PowerRow:
    effect: EffectSpec
    replicates: int
    n_separated: int
    power: float
    mean_site_g: float
    mean_control_g: float


def _parent_lattice(n_parents: int, extent, rng) -> np.ndarray:
    """Jittered lattice keeping parents well apart inside the extent."""
    x0, y0, x1, y1 = extent
    side = int(np.ceil(np.sqrt(n_parents)))
    dx = (x1 - x0) / side
    dy = (y1 - y0) / side
    cells = [(i, j) for j in range(side) for i in range(side)][:n_parents]
    out = np.empty((n_parents, 2))
    for k, (i, j) in enumerate(cells):
        out[k, 0] = x0 + (i + 0.5) * dx + rng.uniform(-0.1, 0.1) * dx
        out[k, 1] = y0 + (j + 0.5) * dy + rng.uniform(-0.1, 0.1) * dy
    return out


def power_experiment(effect_grid, pipeline_params: PowerPipelineParams | None = None, replicates: int = 200, seed: int = 0) -> list[PowerRow]:
    """Separation frequency of site vs control bootstrap CIs per effect.

    For each effect and replicate: generate a landscape with site parents
    at ``mu_site`` offspring and control parents at ``mu_control``, run
    the clusterer, score density at both parent sets, bootstrap both mean
    scores, and record whether the site CI sits strictly above the control
    CI. Deterministic for a given seed.
    """
    pp = pipeline_params or PowerPipelineParams()
    rows = []
    for ei, effect in enumerate(effect_grid):
        n_sep = 0
        site_g_sum = 0.0
        ctrl_g_sum = 0.0
        for r in range(replicates):
            ss = np.random.SeedSequence(seed, spawn_key=(ei, r))
            rng = np.random.default_rng(ss)
            n_parents = pp.n_site_parents + pp.n_control_parents
            parents = _parent_lattice(n_parents, pp.extent, rng)
            site_centers = parents[: pp.n_site_parents]
            control_centers = parents[pp.n_site_parents :]

            # one landscape: site parents and control parents differ only
            # in offspring intensity
            mixed = _generate_two_tier(
                pp.extent,
                site_centers,
                control_centers,
                effect,
                rng,
            )
            HdbscanClusterer(min_cluster_size=pp.min_cluster_size).fit(mixed)

            scorer = IdwScorer(radius=pp.radius, decay_w=pp.decay_w).fit(mixed)
            site_g = scorer.score_samples(site_centers)
            ctrl_g = scorer.score_samples(control_centers)
            boot_seed = int(rng.integers(0, 2**31 - 1))
            site_ci = bootstrap_mean_ci(
                site_g, pp.samples, pp.sample_size, pp.ci_level, seed=boot_seed
            )
            ctrl_ci = bootstrap_mean_ci(
                ctrl_g, pp.samples, pp.sample_size, pp.ci_level, seed=boot_seed + 1
            )
            if site_ci.ci_low > ctrl_ci.ci_high:
                n_sep += 1
            site_g_sum += float(site_g.mean())
            ctrl_g_sum += float(ctrl_g.mean())
        rows.append(
            PowerRow(
                effect=effect,
                replicates=replicates,
                n_separated=n_sep,
                power=n_sep / replicates,
                mean_site_g=site_g_sum / replicates,
                mean_control_g=ctrl_g_sum / replicates,
            )
        )
    return rows


def _generate_two_tier(extent, site_centers, control_centers, effect: EffectSpec, rng) -> np.ndarray:
    """Site and control parents with different offspring means, plus noise."""
    x0, y0, x1, y1 = (float(v) for v in extent)
    area_km2 = (x1 - x0) * (y1 - y0) / 1e6
    chunks = []
    for centers, mu in ((site_centers, effect.mu_site), (control_centers, effect.mu_control)):
        for px, py in centers:
            count = rng.poisson(mu)
            if count == 0:
                continue
            xy = rng.normal(0.0, effect.dispersion_m, size=(count, 2)) + (px, py)
            keep = (
                (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)
            )
            chunks.append(xy[keep])
    n_bg = rng.poisson(effect.background_intensity * area_km2)
    if n_bg:
        chunks.append(
            np.column_stack([rng.uniform(x0, x1, n_bg), rng.uniform(y0, y1, n_bg)])
        )
    if not chunks:
        return np.empty((0, 2))
    return np.concatenate(chunks)
