"""Hierarchical density-based clustering of palm detections.

The chain is the classic density-hierarchy construction: per-point core
distances, a minimum spanning tree of the complete graph under the mutual
reachability distance max(core(a), core(b), dist(a, b)), a condensed
single-linkage hierarchy keeping only splits where both sides reach the
minimum cluster size, and stability-based flat cluster extraction with
low-density points labelled as noise.

Two MST builders are provided: an exact O(n^2) Prim used up to
``PRIM_MAX_POINTS`` and a k-d-tree-accelerated Boruvka above it. They must
produce identical total weights; the tests enforce this on overlapping
sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, ClusterMixin

from . import geo
from ._validation import check_count, check_xy
from .errors import TooFewPoints
from .geo import GeoPoint, GeoPolygon
from .spatial_index import PointIndex

NOISE = -1

PRIM_MAX_POINTS = 20_000

_SELECTION_MODES = ("excess_of_mass", "eom", "leaf")


# ---------------------------------------------------------------------------
# core distances and MST


def core_distances(idx: PointIndex, min_samples: int) -> np.ndarray:
    """Distance from each indexed point to its min_samples-th neighbour.

    The point itself counts as neighbour 1, so ``min_samples=1`` gives
    all zeros.
    """
    min_samples = check_count(min_samples, "min_samples")
    if min_samples > idx.n:
        raise TooFewPoints(f"min_samples={min_samples} exceeds point count {idx.n}")
    return idx.knn_distances(min_samples)


def _mst_prim(xy: np.ndarray, core: np.ndarray) -> np.ndarray:
    n = xy.shape[0]
    x = np.ascontiguousarray(xy[:, 0])
    y = np.ascontiguousarray(xy[:, 1])
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.intp)
    edges = np.empty((n - 1, 3))

    current = 0
    in_tree[0] = True
    dx = np.empty(n)
    dy = np.empty(n)
    d = np.empty(n)
    for step in range(n - 1):
        np.subtract(x, x[current], out=dx)
        np.subtract(y, y[current], out=dy)
        np.sqrt(dx * dx + dy * dy, out=d)
        np.maximum(d, core, out=d)
        np.maximum(d, core[current], out=d)
        improved = (d < best) & ~in_tree
        best[improved] = d[improved]
        parent[improved] = current
        masked = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(masked))
        edges[step, 0] = parent[nxt]
        edges[step, 1] = nxt
        edges[step, 2] = masked[nxt]
        in_tree[nxt] = True
        current = nxt
    return edges


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.intp)

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return int(root)

    def union(self, i: int, j: int) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        self.parent[max(ri, rj)] = min(ri, rj)
        return True


def _mst_boruvka(xy: np.ndarray, core: np.ndarray) -> np.ndarray:
    """Exact mutual-reachability MST via Boruvka rounds over a k-d tree.

    For each point the nearest cross-component partner is found by scanning
    Euclidean neighbours in ascending order; once the next Euclidean
    distance is at least the best reachability seen, no further neighbour
    can win (reachability >= distance), so the scan is exact.
    """
    n = xy.shape[0]
    tree = cKDTree(xy)
    uf = _UnionFind(n)
    ids = np.arange(n, dtype=np.intp)
    edges = np.empty((n - 1, 3))
    n_edges = 0

    while True:
        comp = np.array([uf.find(i) for i in range(n)], dtype=np.intp)
        n_comp = np.unique(comp).size
        if n_comp == 1:
            break

        best_w = np.full(n, np.inf)
        best_j = np.full(n, -1, dtype=np.intp)
        active = ids
        k = min(32, n)
        while active.size:
            d, nbr = tree.query(xy[active], k=k)
            if k == 1:
                d = d[:, None]
                nbr = nbr[:, None]
            mr = np.maximum(d, core[nbr])
            np.maximum(mr, core[active, None], out=mr)
            mr[comp[nbr] == comp[active, None]] = np.inf
            row_min = mr.min(axis=1)
            # among ties on weight, prefer the lowest neighbour id
            tied = mr == row_min[:, None]
            cand = np.where(tied, nbr, n)
            row_arg = cand.min(axis=1)
            settled = (row_min <= d[:, -1]) | (k >= n)
            sel = active[settled]
            best_w[sel] = row_min[settled]
            best_j[sel] = row_arg[settled]
            active = active[~settled]
            k = min(2 * k, n)

        # per component, the minimal outgoing edge under (w, i, j) order
        order = np.lexsort((best_j, ids, best_w))
        _, first = np.unique(comp[order], return_index=True)
        chosen = order[np.sort(first)]
        cand_edges = sorted(
            (best_w[i], min(i, int(best_j[i])), max(i, int(best_j[i]))) for i in chosen
        )
        for w, i, j in cand_edges:
            if uf.union(i, j):
                edges[n_edges, 0] = i
                edges[n_edges, 1] = j
                edges[n_edges, 2] = w
                n_edges += 1
    return edges[:n_edges]


def mutual_reachability_mst(points, core: np.ndarray, prim_max: int = PRIM_MAX_POINTS) -> np.ndarray:
    """MST edges (i, j, weight) of the mutual-reachability graph."""
    xy = check_xy(points, allow_single=False)
    core = np.asarray(core, dtype=np.float64)
    if core.shape != (xy.shape[0],):
        raise ValueError("core distances must align with points")
    if xy.shape[0] == 1:
        return np.empty((0, 3))
    if xy.shape[0] <= prim_max:
        return _mst_prim(xy, core)
    return _mst_boruvka(xy, core)


# ---------------------------------------------------------------------------
# condensed hierarchy and cluster extraction


def _single_linkage(edges: np.ndarray, n: int):
    """Merge order from sorted MST edges: children, heights, subtree sizes."""
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    edges = np.column_stack([lo, hi, edges[:, 2]])
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    edges = edges[order]
    uf = _UnionFind(n)
    node_of = np.arange(n, dtype=np.intp)  # dendrogram node per union-find root
    sizes = np.ones(2 * n - 1, dtype=np.intp)
    children = np.empty((n - 1, 2), dtype=np.intp)
    heights = np.empty(n - 1)
    for step in range(n - 1):
        i, j, w = int(edges[step, 0]), int(edges[step, 1]), edges[step, 2]
        ri, rj = uf.find(i), uf.find(j)
        na, nb = node_of[ri], node_of[rj]
        node = n + step
        children[step] = (na, nb)
        heights[step] = w
        sizes[node] = sizes[na] + sizes[nb]
        uf.union(ri, rj)
        node_of[uf.find(ri)] = node
    return children, heights, sizes


def _leaves_under(node: int, children: np.ndarray, n: int) -> list[int]:
    out = []
    stack = [node]
    while stack:
        m = stack.pop()
        if m < n:
            out.append(m)
        else:
            stack.extend(children[m - n])
    return out


@dataclass
class _CondensedTree:
    # parallel row arrays: parent cluster id, child (point or cluster),
    # lambda at which the child departs, and the child's point count
    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    size: np.ndarray
    n_points: int
    root: int


def _condense(children: np.ndarray, heights: np.ndarray, sizes: np.ndarray, n: int, min_cluster_size: int) -> _CondensedTree:
    finite = heights[heights > 0]
    lam_ceiling = 10.0 * max(1.0 / finite.min() if finite.size else 1.0, 1.0)

    def lam_of(w: float) -> float:
        # zero-weight merges (duplicate points) share one maximal lambda
        return 1.0 / w if w > 0 else lam_ceiling

    rows_parent: list[int] = []
    rows_child: list[int] = []
    rows_lam: list[float] = []
    rows_size: list[int] = []

    root_cluster = n
    next_cluster = n + 1
    # stack of (dendrogram node, condensed cluster carrying it)
    stack = [(2 * n - 2, root_cluster)]
    while stack:
        node, cluster = stack.pop()
        a, b = children[node - n]
        lam = lam_of(heights[node - n])
        big_a = sizes[a] >= min_cluster_size
        big_b = sizes[b] >= min_cluster_size
        if big_a and big_b:
            for side in (a, b):
                rows_parent.append(cluster)
                rows_child.append(next_cluster)
                rows_lam.append(lam)
                rows_size.append(int(sizes[side]))
                if side >= n:
                    stack.append((side, next_cluster))
                else:  # single point can never reach min_cluster_size >= 2
                    raise AssertionError("leaf cannot satisfy min_cluster_size")
                next_cluster += 1
        else:
            for side, big in ((a, big_a), (b, big_b)):
                if big:
                    if side >= n:
                        stack.append((side, cluster))
                    continue
                for leaf in _leaves_under(side, children, n):
                    rows_parent.append(cluster)
                    rows_child.append(leaf)
                    rows_lam.append(lam)
                    rows_size.append(1)
    return _CondensedTree(
        parent=np.array(rows_parent, dtype=np.intp),
        child=np.array(rows_child, dtype=np.intp),
        lam=np.array(rows_lam),
        size=np.array(rows_size, dtype=np.intp),
        n_points=n,
        root=root_cluster,
    )


def _stabilities(tree: _CondensedTree) -> dict[int, float]:
    births: dict[int, float] = {tree.root: 0.0}
    for child, lam in zip(tree.child, tree.lam):
        if child >= tree.n_points:
            births[int(child)] = float(lam)
    stab: dict[int, float] = {c: 0.0 for c in births}
    for parent, lam, size in zip(tree.parent, tree.lam, tree.size):
        p = int(parent)
        stab[p] += (float(lam) - births[p]) * int(size)
    return stab


def _select_clusters(tree: _CondensedTree, stabilities: dict[int, float], selection: str) -> list[int]:
    cluster_rows = tree.child >= tree.n_points
    child_map: dict[int, list[int]] = {c: [] for c in stabilities}
    for p, c in zip(tree.parent[cluster_rows], tree.child[cluster_rows]):
        child_map[int(p)].append(int(c))

    if selection == "leaf":
        leaves = [c for c, kids in child_map.items() if not kids and c != tree.root]
        if not leaves and not child_map[tree.root]:
            return []
        return sorted(leaves)

    # excess of mass, root excluded; children carry higher ids than their
    # parent, so reverse id order visits the tree bottom-up
    parent_of = {
        int(c): int(p)
        for p, c in zip(tree.parent[cluster_rows], tree.child[cluster_rows])
    }
    score = dict(stabilities)
    is_cluster: dict[int, bool] = {}
    for node in sorted(child_map, reverse=True):
        if node == tree.root:
            continue
        subtree = sum(score[k] for k in child_map[node])
        if child_map[node] and subtree > score[node]:
            is_cluster[node] = False
            score[node] = subtree
        else:
            is_cluster[node] = True
    selected = []
    for node in sorted(is_cluster):
        if not is_cluster[node]:
            continue
        # drop if any ancestor is already selected
        cursor = node
        shadowed = False
        while cursor != tree.root:
            cursor = parent_of[cursor]
            if is_cluster.get(cursor, False):
                shadowed = True
                break
        if not shadowed:
            selected.append(node)
    return selected


def _label_points(tree: _CondensedTree, selected: list[int]) -> np.ndarray:
    labels = np.full(tree.n_points, NOISE, dtype=np.intp)
    if not selected:
        return labels
    selected_set = set(selected)
    cluster_rows = tree.child >= tree.n_points
    parent_of = {
        int(c): int(p)
        for p, c in zip(tree.parent[cluster_rows], tree.child[cluster_rows])
    }
    # nearest selected ancestor-or-self per condensed cluster, iterative to
    # stay safe on deep chains
    assign: dict[int, int] = {}

    def resolve(c: int) -> int:
        chain = []
        while c not in assign:
            if c in selected_set:
                assign[c] = c
                break
            if c == tree.root:
                assign[c] = -1
                break
            chain.append(c)
            c = parent_of[c]
        owner = assign[c]
        for link in chain:
            assign[link] = owner
        return owner

    point_rows = ~cluster_rows
    for p, point in zip(tree.parent[point_rows], tree.child[point_rows]):
        owner = resolve(int(p))
        if owner != -1:
            labels[int(point)] = owner
    return labels


# ---------------------------------------------------------------------------
# estimator


class HdbscanClusterer(BaseEstimator, ClusterMixin):
    """Density-based clustering with noise over planar metre coordinates.

    Parameters
    ----------
    min_cluster_size : int, default 100
        Minimum number of points a cluster must contain.
    min_samples : int or None, default None
        Neighbourhood size for core distances; defaults to
        ``min_cluster_size``.
    selection : str, default "excess_of_mass"
        Flat-cluster selection mode, ``"excess_of_mass"`` (``"eom"``) or
        ``"leaf"``.

    Attributes
    ----------
    labels_ : ndarray of shape (n,)
        Cluster id per point, ``NOISE`` (-1) for noise. Cluster ids are
        contiguous, ordered by decreasing size then lowest member id.
    cluster_stabilities_ : ndarray of shape (n_clusters,)
        Stability of each selected cluster.
    """

    def __init__(self, min_cluster_size: int = 100, min_samples: int | None = None, selection: str = "excess_of_mass"):
        self.min_cluster_size = min_cluster_size
        self.min_samples = min_samples
        self.selection = selection

    def fit(self, X, y=None):
        X = check_xy(X, allow_single=False)
        mcs = check_count(self.min_cluster_size, "min_cluster_size", minimum=2)
        ms = mcs if self.min_samples is None else check_count(self.min_samples, "min_samples")
        if self.selection not in _SELECTION_MODES:
            raise ValueError(f"selection must be one of {_SELECTION_MODES}")
        selection = "excess_of_mass" if self.selection == "eom" else self.selection
        n = X.shape[0]
        self.n_features_in_ = 2

        if n < mcs or ms > n:
            self.labels_ = np.full(n, NOISE, dtype=np.intp)
            self.cluster_stabilities_ = np.empty(0)
            return self

        # run the chain on coordinate-sorted points so tie-breaking depends
        # only on the point set, never on input order
        order = np.lexsort((X[:, 1], X[:, 0]))
        Xs = X[order]

        idx = PointIndex(Xs)
        core = core_distances(idx, ms)
        edges = mutual_reachability_mst(Xs, core)
        children, heights, sizes = _single_linkage(edges, n)
        tree = _condense(children, heights, sizes, n, mcs)
        stab = _stabilities(tree)
        selected = _select_clusters(tree, stab, selection)
        raw_sorted = _label_points(tree, selected)
        raw_labels = np.empty(n, dtype=np.intp)
        raw_labels[order] = raw_sorted

        # renumber deterministically: by size desc, then lowest member id
        final = np.full(n, NOISE, dtype=np.intp)
        stabilities = []
        keyed = []
        for c in selected:
            members = np.flatnonzero(raw_labels == c)
            if members.size:
                keyed.append((-members.size, int(members.min()), c, members))
        for new_id, (_, _, c, members) in enumerate(sorted(keyed)):
            final[members] = new_id
            stabilities.append(stab[c])
        self.labels_ = final
        self.cluster_stabilities_ = np.array(stabilities)
        return self


# ---------------------------------------------------------------------------
# domain-level result with hulls


@dataclass(frozen=True)
class ClusterInfo:
    cluster_id: int
    member_ids: np.ndarray
    hull: GeoPolygon
    area_m2: float
    stability: float


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray
    clusters: tuple


@dataclass(frozen=True)
class ClusterSiteAssociation:
    cluster_id: int
    site_ids: tuple


def cluster_detections(lonlat: np.ndarray, origin: GeoPoint, min_cluster_size: int = 100, min_samples: int | None = None, selection: str = "excess_of_mass") -> ClusterResult:
    """Cluster detection coordinates (lon, lat) and build cluster hulls."""
    lonlat = check_xy(lonlat, allow_single=False)
    xs, ys = geo.project_lonlat(lonlat[:, 0], lonlat[:, 1], origin)
    xy = np.column_stack([xs, ys])
    est = HdbscanClusterer(
        min_cluster_size=min_cluster_size, min_samples=min_samples, selection=selection
    ).fit(xy)
    clusters = []
    for cid in range(len(est.cluster_stabilities_)):
        members = np.flatnonzero(est.labels_ == cid)
        hull_xy = geo.convex_hull_xy(xy[members])
        lons, lats = geo.unproject_xy(hull_xy[:, 0], hull_xy[:, 1], origin)
        ring = [GeoPoint(float(lo), float(la)) for lo, la in zip(lons, lats)]
        ring.append(ring[0])
        hull = GeoPolygon(tuple(ring))
        clusters.append(
            ClusterInfo(
                cluster_id=cid,
                member_ids=members,
                hull=hull,
                area_m2=geo.polygon_area(hull),
                stability=float(est.cluster_stabilities_[cid]),
            )
        )
    return ClusterResult(labels=est.labels_, clusters=tuple(clusters))


def associate_sites(result: ClusterResult, centroids) -> list[ClusterSiteAssociation]:
    """Map each cluster to the site centroids inside its hull.

    Overlapping hulls all report a centroid they contain.
    """
    centroids = list(centroids)
    out = []
    if centroids:
        lons = np.array([c.location.lon for c in centroids])
        lats = np.array([c.location.lat for c in centroids])
    for info in result.clusters:
        if not centroids:
            out.append(ClusterSiteAssociation(info.cluster_id, ()))
            continue
        mask = geo.contains_batch(info.hull, lons, lats)
        out.append(
            ClusterSiteAssociation(
                info.cluster_id,
                tuple(centroids[i].id_site for i in np.flatnonzero(mask)),
            )
        )
    return out


def clusters_to_geojson(result: ClusterResult) -> dict:
    """Cluster hulls as a FeatureCollection of polygons."""
    features = []
    for info in result.clusters:
        ring = [[p.lon, p.lat] for p in info.hull.exterior]
        features.append(
            {
                "type": "Feature",
                "id": f"cluster-{info.cluster_id}",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "cluster_id": info.cluster_id,
                    "size": int(info.member_ids.size),
                    "area_m2": info.area_m2,
                    "stability": info.stability,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
