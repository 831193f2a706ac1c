"""Activity-location clustering and home/work zone inference.

Static points of a device are grouped with density clustering (core points
have at least ``min_points`` neighbors within ``eps_m``, haversine metric).
Any cluster wider than two miles is re-clustered with a halved ``eps`` until
it satisfies the bound or dissolves into noise. Clusters whose points move
faster than a walking pace are dropped, and clusters with nearby centroids
are merged.

Border points reachable from more than one cluster go to the cluster of their
nearest core neighbor (lowest index on ties); cluster labels are numbered by
their smallest member index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.neighbors import BallTree

from ._validation import check_columns, check_positive
from .geo import EARTH_RADIUS_M, GeoPoint, ZoneIndex, haversine_np
from .trips import STATIC

logger = logging.getLogger(__name__)

TWO_MILES_M = 3218.69
DAY_S = 86400


@dataclass(frozen=True)
class ClusterConfig:
    eps_m: float = 100.0
    min_points: int = 5
    max_radius_m: float = TWO_MILES_M
    merge_eps_m: float = 150.0
    static_speed_cap_mps: float = 1.4

    def __post_init__(self):
        for name in ("eps_m", "min_points", "max_radius_m", "merge_eps_m", "static_speed_cap_mps"):
            check_positive(name, getattr(self, name))
        if self.eps_m >= self.max_radius_m:
            raise ValueError("eps_m must be smaller than max_radius_m")


@dataclass(frozen=True)
class HomeWorkConfig:
    night_start_h: float = 19.0
    night_end_h: float = 8.0
    min_night_weight: float = 0.5
    work_min_dwell_s: float = 7200.0
    work_min_day_frac: float = 0.25


@dataclass
class ActivityCluster:
    cluster_id: str
    device_id: str
    centroid: GeoPoint
    radius_m: float
    visits: list[tuple[int, int]] = field(default_factory=list)
    total_dwell_s: float = 0.0
    distinct_days: int = 0
    n_points: int = 0


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    home_zone: str
    work_zone: str | None
    employed: bool


# -- density clustering ------------------------------------------------------

def _neighbor_pairs(lat: np.ndarray, lon: np.ndarray, eps_m: float):
    """All ordered pairs (i, j), i != j, within eps_m plus their distances."""
    n = len(lat)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    X = np.radians(np.column_stack([lat, lon]))
    tree = BallTree(X, metric="haversine")
    ind = tree.query_radius(X, r=eps_m / EARTH_RADIUS_M * (1 + 1e-9))
    counts = np.fromiter((len(a) for a in ind), dtype=np.int64, count=n)
    rows = np.repeat(np.arange(n), counts)
    cols = np.concatenate(ind).astype(np.int64) if n else np.zeros(0, dtype=np.int64)
    off = rows != cols
    rows, cols = rows[off], cols[off]
    d = haversine_np(lat[rows], lon[rows], lat[cols], lon[cols])
    ok = d <= eps_m
    return rows[ok], cols[ok], d[ok]


_PAIRS_MAX_N = 300


def dbscan_haversine(lat, lon, eps_m: float, min_points: int, algorithm: str = "auto") -> np.ndarray:
    """Density clustering on the sphere; returns labels (-1 for noise).

    ``algorithm="pairs"`` materializes every neighbor pair; ``"cover"``
    avoids that for dense inputs (see :func:`_dbscan_cover`). Both give
    identical labels; ``"auto"`` picks by input size.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if algorithm not in ("auto", "pairs", "cover"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if algorithm == "cover" or (algorithm == "auto" and len(lat) > _PAIRS_MAX_N):
        return _canonical(_dbscan_cover(lat, lon, eps_m, min_points))
    return _canonical(_dbscan_pairs(lat, lon, eps_m, min_points))


def _dbscan_pairs(lat, lon, eps_m, min_points) -> np.ndarray:
    n = len(lat)
    raw = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return raw
    rows, cols, d = _neighbor_pairs(lat, lon, eps_m)
    n_nb = np.bincount(rows, minlength=n) + 1
    core = n_nb >= min_points
    if not core.any():
        return raw
    core_idx = np.flatnonzero(core)
    pos = np.full(n, -1, dtype=np.int64)
    pos[core_idx] = np.arange(len(core_idx))
    cc = core[rows] & core[cols]
    graph = coo_matrix((np.ones(cc.sum()), (pos[rows[cc]], pos[cols[cc]])),
                       shape=(len(core_idx), len(core_idx)))
    _, comp = connected_components(graph, directed=False)
    raw[core_idx] = comp
    _assign_border(raw, core, rows, cols, d)
    return raw


def _assign_border(raw, core, rows, cols, d) -> None:
    """Each border row joins its nearest core neighbor's cluster (lowest index on ties)."""
    border = ~core[rows] & core[cols]
    if border.any():
        br, bc, bd = rows[border], cols[border], d[border]
        order = np.lexsort((bc, bd, br))
        br, bc = br[order], bc[order]
        first = np.ones(len(br), dtype=bool)
        first[1:] = br[1:] != br[:-1]
        raw[br[first]] = raw[bc[first]]


def _dbscan_cover(lat, lon, eps_m, min_points) -> np.ndarray:
    """Exact density clustering without enumerating dense neighborhoods.

    Points are binned into small grid cells. A cell whose members all lie
    within ``eps/2`` (exact distance) of its first member is a *ball*: its
    members are pairwise within ``eps``, so with ``min_points`` members they
    are all core and mutually connected. Points outside such balls get
    exact neighbor counts, and leftover core points are covered greedily by
    further ``eps/2`` balls. Balls are then linked when some pair of their
    members is within ``eps``; leader distances settle most pairs without
    looking at members.
    """
    n = len(lat)
    raw = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return raw
    half = eps_m / 2 * (1 - 1e-9)
    X = np.radians(np.column_stack([lat, lon]))
    r = eps_m / EARTH_RADIUS_M

    # grid cells of side eps/3 in a local equirectangular projection
    ref = math.cos(math.radians(float(np.mean(lat))))
    side = eps_m / 3.0
    gx = np.floor(X[:, 1] * EARTH_RADIUS_M * ref / side).astype(np.int64)
    gy = np.floor(X[:, 0] * EARTH_RADIUS_M / side).astype(np.int64)
    _, cell, cell_n = np.unique(gx * (1 << 32) + gy, return_inverse=True, return_counts=True)
    order = np.argsort(cell, kind="stable")
    starts = np.concatenate([[0], np.cumsum(cell_n)[:-1]])
    lead = order[starts]
    dist_lead = haversine_np(lat[lead[cell]], lon[lead[cell]], lat, lon)
    bad = np.zeros(len(cell_n), dtype=bool)
    np.logical_or.at(bad, cell, dist_lead > half)
    dense = ~bad & (cell_n >= min_points)

    core = dense[cell]
    rest = np.flatnonzero(~core)
    tree = BallTree(X, metric="haversine")
    if len(rest):
        hi = tree.query_radius(X[rest], r * (1 + 1e-9), count_only=True)
        lo = tree.query_radius(X[rest], r * (1 - 1e-9), count_only=True)
        core[rest[lo >= min_points]] = True
        unsure = rest[(lo < min_points) & (hi >= min_points)]
        if len(unsure):
            for i, nb in zip(unsure, tree.query_radius(X[unsure], r * (1 + 1e-9))):
                core[i] = int(np.sum(haversine_np(lat[i], lon[i], lat[nb], lon[nb]) <= eps_m)) >= min_points
    if not core.any():
        return raw

    # balls: dense cells first, then greedy cover of the remaining core points
    group = np.full(n, -1, dtype=np.int64)
    dense_ids = np.flatnonzero(dense)
    ball_of_cell = np.full(len(cell_n), -1, dtype=np.int64)
    ball_of_cell[dense_ids] = np.arange(len(dense_ids))
    group[core & dense[cell]] = ball_of_cell[cell[core & dense[cell]]]
    leaders = list(lead[dense_ids])
    for i in np.flatnonzero(core & (group < 0)):
        if group[i] >= 0:
            continue
        nb = tree.query_radius(X[i:i + 1], half / EARTH_RADIUS_M * (1 + 1e-9))[0]
        nb = nb[core[nb] & (group[nb] < 0)]
        nb = nb[haversine_np(lat[i], lon[i], lat[nb], lon[nb]) <= half]
        group[nb] = len(leaders)
        group[i] = len(leaders)
        leaders.append(i)
    leaders = np.asarray(leaders, dtype=np.int64)
    k = len(leaders)
    core_idx = np.flatnonzero(core)
    by_group = np.argsort(group[core_idx], kind="stable")
    g_sorted = core_idx[by_group]
    g_bounds = np.searchsorted(group[g_sorted], np.arange(k + 1))
    members = [g_sorted[g_bounds[g]:g_bounds[g + 1]] for g in range(k)]
    spread = np.array([float(np.max(haversine_np(lat[leaders[g]], lon[leaders[g]], lat[m], lon[m])))
                       for g, m in enumerate(members)])

    parent = np.arange(k)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    ga, gb = np.triu_indices(k, k=1)
    dl = haversine_np(lat[leaders[ga]], lon[leaders[ga]], lat[leaders[gb]], lon[leaders[gb]])
    cand = dl <= 2 * eps_m * (1 + 1e-9)
    ga, gb, dl = ga[cand], gb[cand], dl[cand]
    sure = dl + spread[ga] + spread[gb] <= eps_m * (1 - 1e-9)
    for a, b in zip(ga[sure], gb[sure]):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    for a, b in zip(ga[~sure], gb[~sure]):
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        ma, mb = members[a], members[b]
        # only members within eps of the other ball's reach can link
        ma = ma[haversine_np(lat[leaders[b]], lon[leaders[b]], lat[ma], lon[ma]) <= eps_m + spread[b] + 1e-6]
        mb = mb[haversine_np(lat[leaders[a]], lon[leaders[a]], lat[mb], lon[mb]) <= eps_m + spread[a] + 1e-6]
        if len(ma) == 0 or len(mb) == 0:
            continue
        d = haversine_np(lat[ma][:, None], lon[ma][:, None], lat[mb][None, :], lon[mb][None, :])
        if np.any(d <= eps_m):
            parent[max(ra, rb)] = min(ra, rb)
    comp = np.array([find(g) for g in range(k)], dtype=np.int64)
    raw[core] = comp[group[core]]

    border_idx = np.flatnonzero(~core)
    if len(border_idx):
        ind = tree.query_radius(X[border_idx], r * (1 + 1e-9))
        counts = np.fromiter((len(a) for a in ind), dtype=np.int64, count=len(border_idx))
        rows = np.repeat(border_idx, counts)
        cols = np.concatenate(ind).astype(np.int64)
        keep = core[cols]
        rows, cols = rows[keep], cols[keep]
        d = haversine_np(lat[rows], lon[rows], lat[cols], lon[cols])
        ok = d <= eps_m
        _assign_border(raw, core, rows[ok], cols[ok], d[ok])
    return raw


def _canonical(raw: np.ndarray) -> np.ndarray:
    """Renumber cluster labels by smallest member index."""
    labels = np.full(len(raw), -1, dtype=np.int64)
    members = raw >= 0
    if not members.any():
        return labels
    uniq, first_idx = np.unique(raw[members], return_index=True)
    order = np.argsort(np.flatnonzero(members)[first_idx])
    remap = np.empty(len(uniq), dtype=np.int64)
    remap[order] = np.arange(len(uniq))
    labels[members] = remap[np.searchsorted(uniq, raw[members])]
    return labels


def _centroid_radius(lat: np.ndarray, lon: np.ndarray) -> tuple[float, float, float]:
    clat = float(np.mean(lat))
    clon = float(np.mean(lon))
    r = float(np.max(haversine_np(clat, clon, lat, lon))) if len(lat) else 0.0
    return clat, clon, r


def _capped_clusters(idx: np.ndarray, lat, lon, eps_m: float, cfg: ClusterConfig, min_eps_m: float = 1.0):
    """Recursive radius capping; returns a list of index arrays."""
    labels = dbscan_haversine(lat[idx], lon[idx], eps_m, cfg.min_points)
    out = []
    for k in range(labels.max() + 1 if len(labels) else 0):
        members = idx[labels == k]
        _, _, r = _centroid_radius(lat[members], lon[members])
        if r <= cfg.max_radius_m:
            out.append(members)
        elif eps_m / 2 >= min_eps_m:
            out.extend(_capped_clusters(members, lat, lon, eps_m / 2, cfg, min_eps_m))
    return out


def _median_speed(ts, lat, lon) -> float:
    if len(ts) < 2:
        return 0.0
    d = haversine_np(lat[:-1], lon[:-1], lat[1:], lon[1:])
    dt = np.diff(ts).astype(float)
    return float(np.median(d / dt))


def merge_clusters(groups: list[np.ndarray], lat, lon, cfg: ClusterConfig) -> list[np.ndarray]:
    """Merge groups whose centroids are closer than ``merge_eps_m``.

    Closeness is judged on the pre-merge centroids and merged transitively;
    a merged group that would exceed ``max_radius_m`` is left unmerged. The
    result is independent of the input order.
    """
    if len(groups) < 2:
        return [np.sort(g) for g in groups]
    cents = np.array([_centroid_radius(lat[g], lon[g])[:2] for g in groups])
    n = len(groups)
    i, j = np.triu_indices(n, k=1)
    d = haversine_np(cents[i, 0], cents[i, 1], cents[j, 0], cents[j, 1])
    close = d < cfg.merge_eps_m
    graph = coo_matrix((np.ones(close.sum()), (i[close], j[close])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    out = []
    for c in np.unique(comp):
        parts = [groups[k] for k in np.flatnonzero(comp == c)]
        if len(parts) == 1:
            out.append(np.sort(parts[0]))
            continue
        merged = np.sort(np.concatenate(parts))
        if _centroid_radius(lat[merged], lon[merged])[2] <= cfg.max_radius_m:
            out.append(merged)
        else:
            out.extend(np.sort(p) for p in parts)
    out.sort(key=lambda g: int(g[0]))
    return out


def _static_mask(points: pd.DataFrame) -> np.ndarray:
    if "trip_id" in points.columns:
        return (points["trip_id"].astype(str) == STATIC).to_numpy()
    return np.ones(len(points), dtype=bool)


def cluster_activities(points: pd.DataFrame, cfg: ClusterConfig | None = None,
                       device_id: str | None = None) -> list[ActivityCluster]:
    """Activity clusters of one device.

    ``points`` is the device's time-sorted sequence; when it carries a
    ``trip_id`` column only rows tagged ``"0"`` are clustered and trip rows
    split visits. Returns clusters ordered by first visit.
    """
    clusters, _ = _cluster_device(points, cfg or ClusterConfig(), device_id)
    return clusters


def _cluster_device(points: pd.DataFrame, cfg: ClusterConfig, device_id: str | None):
    check_columns(points, ["ts", "lat", "lon"], "points")
    if device_id is None:
        device_id = str(points["device_id"].iloc[0]) if "device_id" in points.columns and len(points) else ""
    ts_all = points["ts"].to_numpy(dtype=np.int64)
    static = np.flatnonzero(_static_mask(points))
    lat = points["lat"].to_numpy(dtype=float)
    lon = points["lon"].to_numpy(dtype=float)
    groups = _capped_clusters(static, lat, lon, cfg.eps_m, cfg) if len(static) else []
    groups = [g for g in groups if _median_speed(ts_all[g], lat[g], lon[g]) <= cfg.static_speed_cap_mps]
    groups = merge_clusters(groups, lat, lon, cfg)

    member = np.full(len(points), -1, dtype=np.int64)
    for k, g in enumerate(groups):
        member[g] = k
    # visits: maximal runs of consecutive rows in the same cluster
    n = len(points)
    change = np.ones(n, dtype=bool)
    if n > 1:
        change[1:] = member[1:] != member[:-1]
    starts = np.flatnonzero(change)
    ends = np.append(starts[1:], n) - 1
    run_label = member[starts]
    clusters = []
    for k, g in enumerate(groups):
        clat, clon, r = _centroid_radius(lat[g], lon[g])
        sel = run_label == k
        visits = list(zip(ts_all[starts[sel]].tolist(), ts_all[ends[sel]].tolist()))
        clusters.append(ActivityCluster(
            cluster_id="",
            device_id=device_id,
            centroid=GeoPoint(clat, clon),
            radius_m=r,
            visits=visits,
            total_dwell_s=float(sum(e - s for s, e in visits)),
            distinct_days=int(len(np.unique(ts_all[g] // DAY_S))),
            n_points=len(g),
        ))
    order = sorted(range(len(clusters)),
                   key=lambda k: (clusters[k].visits[0][0], clusters[k].centroid.lat, clusters[k].centroid.lon))
    out = []
    labels = np.full(len(points), -1, dtype=np.int64)
    for new_k, k in enumerate(order):
        c = clusters[k]
        c.cluster_id = f"{device_id}:c{new_k}"
        out.append(c)
        labels[groups[k]] = new_k
    return out, labels


# -- home / work -------------------------------------------------------------

def _offset_s(cluster: ActivityCluster, zones: ZoneIndex | None) -> float:
    if zones is None:
        return 0.0
    zid = zones.locate(cluster.centroid)
    return zones[zid].utc_offset_hours * 3600.0 if zid is not None else 0.0


def night_presence(cluster: ActivityCluster, offset_s: float = 0.0, cfg: HomeWorkConfig | None = None) -> int:
    """Number of distinct nights with a mostly-nighttime visit to ``cluster``.

    Night ``d`` runs from ``night_start_h`` on local day ``d`` to
    ``night_end_h`` on day ``d + 1``. A visit's nighttime weight for night
    ``d`` is its overlap with that window divided by the shorter of the
    visit and the window, so a visit spanning whole days counts every night
    it covers (an instantaneous visit weighs 1 inside the window and 0
    outside). The night counts when some visit reaches ``min_night_weight``.
    """
    cfg = cfg or HomeWorkConfig()
    ns = cfg.night_start_h * 3600.0
    ne = DAY_S + cfg.night_end_h * 3600.0
    nights = set()
    for s, e in cluster.visits:
        sl, el = s + offset_s, e + offset_s
        length = el - sl
        for d in range(int(sl // DAY_S) - 1, int(el // DAY_S) + 1):
            w0, w1 = d * DAY_S + ns, d * DAY_S + ne
            if length > 0:
                weight = max(0.0, min(el, w1) - max(sl, w0)) / min(length, w1 - w0)
            else:
                weight = 1.0 if w0 <= sl < w1 else 0.0
            if weight > 0 and weight >= cfg.min_night_weight:
                nights.add(d)
    return len(nights)


def select_home(clusters: list[ActivityCluster], zones: ZoneIndex | None = None,
                cfg: HomeWorkConfig | None = None) -> ActivityCluster:
    """Cluster with the most nights of presence (ties: dwell, then id)."""
    if not clusters:
        raise ValueError("home identification needs at least one cluster")
    cfg = cfg or HomeWorkConfig()
    return min(clusters, key=lambda c: (-night_presence(c, _offset_s(c, zones), cfg), -c.total_dwell_s, c.cluster_id))


def identify_home(clusters: list[ActivityCluster], zone_index: ZoneIndex,
                  cfg: HomeWorkConfig | None = None) -> str | None:
    """Home zone id, or None when the home centroid lies outside every zone."""
    return zone_index.locate(select_home(clusters, zone_index, cfg).centroid)


def work_days(cluster: ActivityCluster, offset_s: float = 0.0, min_dwell_s: float = 7200.0) -> int:
    """Days whose visits (attributed to their local start date) sum to >= min_dwell_s."""
    per_day: dict[int, float] = {}
    for s, e in cluster.visits:
        day = int((s + offset_s) // DAY_S)
        per_day[day] = per_day.get(day, 0.0) + (e - s)
    return sum(1 for v in per_day.values() if v >= min_dwell_s)


def select_work(clusters: list[ActivityCluster], home_cluster_id: str, n_observed_days: int,
                zones: ZoneIndex | None = None, cfg: HomeWorkConfig | None = None) -> ActivityCluster | None:
    cfg = cfg or HomeWorkConfig()
    best, best_key = None, None
    for c in clusters:
        if c.cluster_id == home_cluster_id:
            continue
        days = work_days(c, _offset_s(c, zones), cfg.work_min_dwell_s)
        key = (-days, -c.total_dwell_s, c.cluster_id)
        if days > 0 and (best_key is None or key < best_key):
            best, best_key = c, key
    if best is None:
        return None
    days = -best_key[0]
    return best if days >= cfg.work_min_day_frac * n_observed_days else None


def identify_work(clusters: list[ActivityCluster], home_cluster_id: str, zone_index: ZoneIndex,
                  n_observed_days: int | None = None, cfg: HomeWorkConfig | None = None) -> str | None:
    """Work zone id or None (not employed).

    ``n_observed_days`` defaults to the number of distinct days covered by
    the clusters' visits.
    """
    if n_observed_days is None:
        days = {d for c in clusters for s, e in c.visits for d in range(s // DAY_S, e // DAY_S + 1)}
        n_observed_days = len(days)
    work = select_work(clusters, home_cluster_id, n_observed_days, zone_index, cfg)
    return zone_index.locate(work.centroid) if work is not None else None


def profile_device(points: pd.DataFrame, zones: ZoneIndex, ccfg: ClusterConfig, hcfg: HomeWorkConfig,
                   device_id: str):
    """Clusters and profile of one device; profile is None when it cannot be placed."""
    clusters = cluster_activities(points, ccfg, device_id)
    if not clusters:
        return clusters, None, "no activity clusters"
    home = select_home(clusters, zones, hcfg)
    home_zone = zones.locate(home.centroid)
    if home_zone is None:
        return clusters, None, "home outside all zones"
    offset = zones[home_zone].utc_offset_hours * 3600.0
    n_days = len(np.unique((points["ts"].to_numpy(dtype=np.int64) + int(offset)) // DAY_S))
    work = select_work(clusters, home.cluster_id, n_days, zones, hcfg)
    work_zone = zones.locate(work.centroid) if work is not None else None
    return clusters, DeviceProfile(device_id, home_zone, work_zone, work_zone is not None), None


def _profile_block(frames, zones, ccfg, hcfg):
    return [profile_device(f, zones, ccfg, hcfg, dev) for dev, f in frames]


class ActivityClusterer(ClusterMixin, BaseEstimator):
    """Single-device activity clustering with the sklearn cluster interface.

    ``fit(X)`` sets ``labels_`` (cluster index per row, -1 for noise and
    trip rows) and ``clusters_``.
    """

    def __init__(self, eps_m=100.0, min_points=5, max_radius_m=TWO_MILES_M, merge_eps_m=150.0,
                 static_speed_cap_mps=1.4):
        self.eps_m = eps_m
        self.min_points = min_points
        self.max_radius_m = max_radius_m
        self.merge_eps_m = merge_eps_m
        self.static_speed_cap_mps = static_speed_cap_mps

    def fit(self, X, y=None):
        cfg = ClusterConfig(self.eps_m, self.min_points, self.max_radius_m, self.merge_eps_m,
                            self.static_speed_cap_mps)
        self.clusters_, self.labels_ = _cluster_device(X.reset_index(drop=True), cfg, None)
        return self


class ActivityProfiler(BaseEstimator):
    """Home/work inference for every device of a labeled point frame.

    ``fit(points, zones=...)`` expects rows sorted by ``(device_id, ts)``
    with a ``trip_id`` column and sets ``profiles_`` (one row per placed
    device), ``clusters_`` (device -> clusters) and ``excluded_``
    (device -> reason).
    """

    def __init__(self, eps_m=100.0, min_points=5, max_radius_m=TWO_MILES_M, merge_eps_m=150.0,
                 static_speed_cap_mps=1.4, night_start_h=19.0, night_end_h=8.0, min_night_weight=0.5,
                 work_min_dwell_s=7200.0, work_min_day_frac=0.25, n_jobs=None):
        self.eps_m = eps_m
        self.min_points = min_points
        self.max_radius_m = max_radius_m
        self.merge_eps_m = merge_eps_m
        self.static_speed_cap_mps = static_speed_cap_mps
        self.night_start_h = night_start_h
        self.night_end_h = night_end_h
        self.min_night_weight = min_night_weight
        self.work_min_dwell_s = work_min_dwell_s
        self.work_min_day_frac = work_min_day_frac
        self.n_jobs = n_jobs

    def fit(self, X, y=None, zones: ZoneIndex | None = None):
        if zones is None:
            raise ValueError("ActivityProfiler.fit needs a zone index")
        check_columns(X, ["device_id", "ts", "lat", "lon"], "points")
        ccfg = ClusterConfig(self.eps_m, self.min_points, self.max_radius_m, self.merge_eps_m,
                             self.static_speed_cap_mps)
        hcfg = HomeWorkConfig(self.night_start_h, self.night_end_h, self.min_night_weight,
                              self.work_min_dwell_s, self.work_min_day_frac)
        X = X.reset_index(drop=True)
        dev = X["device_id"].to_numpy()
        cut = np.flatnonzero(dev[1:] != dev[:-1]) + 1 if len(dev) else np.zeros(0, dtype=np.int64)
        starts = np.concatenate([[0], cut]) if len(dev) else cut
        ends = np.append(cut, len(dev)) if len(dev) else cut
        frames = [(str(dev[s]), X.iloc[s:e]) for s, e in zip(starts.tolist(), ends.tolist())]
        jobs = self.n_jobs or 1
        if jobs == 1 or len(frames) < 2:
            results = _profile_block(frames, zones, ccfg, hcfg)
        else:
            chunks = [frames[i::max(1, 4 * abs(jobs))] for i in range(max(1, 4 * abs(jobs)))]
            parts = Parallel(n_jobs=jobs)(delayed(_profile_block)(c, zones, ccfg, hcfg) for c in chunks if c)
            by_dev = {}
            for c, part in zip([c for c in chunks if c], parts):
                for (d, _), res in zip(c, part):
                    by_dev[d] = res
            results = [by_dev[d] for d, _ in frames]
        self.clusters_ = {}
        self.excluded_ = {}
        rows = []
        for (d, _), (clusters, profile, reason) in zip(frames, results):
            self.clusters_[d] = clusters
            if profile is None:
                self.excluded_[d] = reason
            else:
                rows.append(profile)
        if self.excluded_:
            logger.info("activity: %d devices excluded from weighting", len(self.excluded_))
        self.profiles_ = profiles_frame(rows)
        return self


PROFILE_COLUMNS = ["device_id", "home_zone", "work_zone", "employed"]


def profiles_frame(profiles: list[DeviceProfile]) -> pd.DataFrame:
    return pd.DataFrame({
        "device_id": [p.device_id for p in profiles],
        "home_zone": [p.home_zone for p in profiles],
        "work_zone": [p.work_zone for p in profiles],
        "employed": [bool(p.employed) for p in profiles],
    }, columns=PROFILE_COLUMNS)
