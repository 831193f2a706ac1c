"""Trip segmentation of cleaned, time-sorted sightings.

Each point gets neighbor metrics (distance, time and speed to its previous
and next point). A point joins its predecessor's trip when it was reached
on the move (``speed_from_prev >= speed threshold``). A slow point far from
its predecessor (``dist_to_prev > distance threshold``) never joins. A slow,
close point is part of a stop: the stop is anchored at its first
observation and the trip continues while the dwell measured from that
anchor stays below the time threshold. A point that does not join opens a
new trip when it departs on the move (``speed_to_next >= threshold``) and is
static (trip id ``"0"``) otherwise.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_columns, check_positive, is_sorted_by_device_ts
from .geo import EARTH_RADIUS_M, ZoneIndex, haversine_np

STATIC = "0"
TRIP_COLUMNS = ["trip_id", "device_id", "departure_ts", "arrival_ts", "o_lat", "o_lon",
                "d_lat", "d_lon", "o_zone", "d_zone", "distance_m", "n_points"]
MIN_TRIP_LENGTH_M = 300.0


@dataclass(frozen=True)
class TripConfig:
    distance_threshold_m: float = 200.0
    time_threshold_s: float = 900.0
    speed_threshold_mps: float = 1.4
    min_trip_length_m: float = MIN_TRIP_LENGTH_M

    def __post_init__(self):
        check_positive("distance_threshold_m", self.distance_threshold_m)
        check_positive("time_threshold_s", self.time_threshold_s)
        check_positive("speed_threshold_mps", self.speed_threshold_mps)
        check_positive("min_trip_length_m", self.min_trip_length_m)


def trip_id_for(device_id: str, departure_ts: int) -> str:
    """Deterministic stand-in for a random trip id."""
    return hashlib.sha1(f"{device_id}:{int(departure_ts)}".encode()).hexdigest()[:16]


def annotate(points: pd.DataFrame) -> pd.DataFrame:
    """Add previous/next neighbor distance, time and speed columns.

    ``points`` must be sorted by ``(device_id, ts)`` with strictly
    increasing ``ts`` per device (a frame without ``device_id`` is treated as
    one device). Metrics are NaN where the neighbor does not exist.
    """
    check_columns(points, ["ts", "lat", "lon"], "points")
    out = points.reset_index(drop=True).copy()
    if "device_id" not in out.columns:
        dev = np.zeros(len(out), dtype=np.int64)
        check = out.assign(device_id="")
    else:
        dev = pd.factorize(out["device_id"])[0]
        check = out
    if not is_sorted_by_device_ts(check):
        raise ValueError("points must be sorted by time with strictly increasing ts per device")
    n = len(out)
    ts = out["ts"].to_numpy(dtype=np.int64)
    lat = out["lat"].to_numpy(dtype=float)
    lon = out["lon"].to_numpy(dtype=float)
    dist = np.full(n, np.nan)
    dt = np.full(n, np.nan)
    if n > 1:
        same = dev[1:] == dev[:-1]
        leg = haversine_np(lat[:-1], lon[:-1], lat[1:], lon[1:])
        gap = (ts[1:] - ts[:-1]).astype(float)
        dist[1:] = np.where(same, leg, np.nan)
        dt[1:] = np.where(same, gap, np.nan)
    out["dist_to_prev_m"] = dist
    out["time_to_prev_s"] = dt
    out["speed_from_prev_mps"] = dist / dt
    nxt_d = np.full(n, np.nan)
    nxt_t = np.full(n, np.nan)
    nxt_d[:-1] = dist[1:]
    nxt_t[:-1] = dt[1:]
    out["dist_to_next_m"] = nxt_d
    out["time_to_next_s"] = nxt_t
    out["speed_to_next_mps"] = nxt_d / nxt_t
    return out


def _hav(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    h = (math.sin((p2 - p1) / 2) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _segment_device(ts, lat, lon, in_d, in_v, out_v, cfg: TripConfig) -> list[int]:
    """Trip ordinal per point (-1 for static) for one device."""
    d_thr = cfg.distance_threshold_m
    t_thr = cfg.time_threshold_s
    v_thr = cfg.speed_threshold_mps
    n = len(ts)
    label = [-1] * n
    n_trips = 0
    anchor = -1
    for i in range(n):
        joins = False
        if i > 0 and label[i - 1] >= 0:
            if in_v[i] >= v_thr:
                joins = True
                anchor = -1
            elif in_d[i] > d_thr:
                joins = False
            else:
                if anchor < 0 or _hav(lat[anchor], lon[anchor], lat[i], lon[i]) > d_thr:
                    anchor = i - 1
                joins = ts[i] - ts[anchor] < t_thr
        if joins:
            label[i] = label[i - 1]
        else:
            anchor = -1
            if i < n - 1 and out_v[i] >= v_thr:
                label[i] = n_trips
                n_trips += 1
    return label


def _segment_block(ts, lat, lon, in_d, in_v, out_v, bounds, cfg) -> np.ndarray:
    out = np.full(len(ts), -1, dtype=np.int64)
    for lo, hi in bounds:
        lab = _segment_device(ts[lo:hi], lat[lo:hi], lon[lo:hi], in_d[lo:hi], in_v[lo:hi], out_v[lo:hi], cfg)
        out[lo:hi] = lab
    return out


def _device_bounds(device_id: np.ndarray) -> list[tuple[int, int]]:
    n = len(device_id)
    if n == 0:
        return []
    cut = np.flatnonzero(device_id[1:] != device_id[:-1]) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut, [n]])
    return list(zip(starts.tolist(), ends.tolist()))


def _trip_table(ann: pd.DataFrame, ordinal: np.ndarray) -> tuple[pd.DataFrame, np.ndarray]:
    """Build the trip table from per-point (device-local) trip ordinals."""
    n = len(ann)
    dev = ann["device_id"].to_numpy() if "device_id" in ann.columns else np.full(n, "", dtype=object)
    dev_codes = pd.factorize(dev)[0] if n else np.zeros(0, dtype=np.int64)
    in_trip = ordinal >= 0
    # global trip number: consecutive run of identical (device, ordinal) pairs
    key_change = np.ones(n, dtype=bool)
    if n > 1:
        key_change[1:] = (dev_codes[1:] != dev_codes[:-1]) | (ordinal[1:] != ordinal[:-1])
    run = np.cumsum(key_change) - 1
    trip_runs = np.unique(run[in_trip])
    ts = ann["ts"].to_numpy(dtype=np.int64)
    lat = ann["lat"].to_numpy(dtype=float)
    lon = ann["lon"].to_numpy(dtype=float)
    leg = np.nan_to_num(ann["dist_to_prev_m"].to_numpy(dtype=float))
    ids = np.full(n, STATIC, dtype=object)
    if len(trip_runs) == 0:
        return pd.DataFrame({c: [] for c in TRIP_COLUMNS}).astype(
            {"departure_ts": np.int64, "arrival_ts": np.int64, "n_points": np.int64,
             "distance_m": float}), ids
    run_start = np.flatnonzero(key_change)
    run_end = np.append(run_start[1:], n) - 1
    s = run_start[trip_runs]
    e = run_end[trip_runs]
    is_start = np.zeros(n, dtype=bool)
    is_start[s] = True
    legs_in_trip = np.where(in_trip & ~is_start, leg, 0.0)
    distance = np.add.reduceat(legs_in_trip, s)
    dev_s = dev[s]
    trip_ids = [trip_id_for(d, t) for d, t in zip(dev_s.tolist(), ts[s].tolist())]
    ids_per_run = np.full(run.max() + 1, STATIC, dtype=object)
    ids_per_run[trip_runs] = trip_ids
    ids = np.where(in_trip, ids_per_run[run], STATIC)
    trips = pd.DataFrame({
        "trip_id": trip_ids,
        "device_id": dev_s,
        "departure_ts": ts[s],
        "arrival_ts": ts[e],
        "o_lat": lat[s],
        "o_lon": lon[s],
        "d_lat": lat[e],
        "d_lon": lon[e],
        "o_zone": None,
        "d_zone": None,
        "distance_m": distance,
        "n_points": (e - s + 1).astype(np.int64),
    })
    return trips, ids.astype(object)


def segment(points: pd.DataFrame, cfg: TripConfig | None = None, n_jobs: int | None = None
            ) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Segment annotated points into trips.

    Returns ``(trips, labeled)`` where ``labeled`` is the input with a
    ``trip_id`` column (``"0"`` for static points). Devices are independent
    and may be processed in parallel with ``n_jobs``; results do not depend
    on the parallelism level.
    """
    cfg = cfg or TripConfig()
    ann = points if "speed_to_next_mps" in points.columns else annotate(points)
    ann = ann.reset_index(drop=True)
    n = len(ann)
    ts = ann["ts"].to_numpy(dtype=np.int64)
    lat = ann["lat"].to_numpy(dtype=float)
    lon = ann["lon"].to_numpy(dtype=float)
    in_d = ann["dist_to_prev_m"].to_numpy(dtype=float)
    in_v = ann["speed_from_prev_mps"].to_numpy(dtype=float)
    out_v = ann["speed_to_next_mps"].to_numpy(dtype=float)
    dev = ann["device_id"].to_numpy() if "device_id" in ann.columns else np.zeros(n)
    bounds = _device_bounds(dev)
    jobs = n_jobs or 1
    if jobs == 1 or len(bounds) < 2:
        ordinal = _segment_block(ts, lat, lon, in_d, in_v, out_v, bounds, cfg)
    else:
        chunks = [c for c in np.array_split(np.arange(len(bounds)), min(len(bounds), 4 * abs(jobs))) if len(c)]
        spans = [(bounds[c[0]][0], bounds[c[-1]][1]) for c in chunks]
        parts = Parallel(n_jobs=jobs)(
            delayed(_segment_block)(ts[lo:hi], lat[lo:hi], lon[lo:hi], in_d[lo:hi], in_v[lo:hi], out_v[lo:hi],
                                    [(a - lo, b - lo) for a, b in (bounds[k] for k in c)], cfg)
            for c, (lo, hi) in zip(chunks, spans)
        )
        ordinal = np.full(n, -1, dtype=np.int64)
        for (lo, hi), lab in zip(spans, parts):
            ordinal[lo:hi] = lab
    trips, ids = _trip_table(ann, ordinal)
    labeled = ann.copy()
    labeled["trip_id"] = ids
    return trips, labeled


def filter_short(trips: pd.DataFrame, min_trip_length_m: float = MIN_TRIP_LENGTH_M) -> pd.DataFrame:
    """Drop trips shorter than ``min_trip_length_m`` (300 m kept)."""
    if len(trips) == 0:
        return trips.copy()
    return trips.loc[trips["distance_m"] >= min_trip_length_m].reset_index(drop=True)


def assign_zones(trips: pd.DataFrame, zones: ZoneIndex) -> pd.DataFrame:
    out = trips.copy()
    if len(out):
        out["o_zone"] = zones.locate_many(out["o_lat"].to_numpy(), out["o_lon"].to_numpy())
        out["d_zone"] = zones.locate_many(out["d_lat"].to_numpy(), out["d_lon"].to_numpy())
    return out


def in_trip_mask(points: pd.DataFrame, trips: pd.DataFrame) -> np.ndarray:
    """True for points lying inside one of their device's trips (by time)."""
    n = len(points)
    mask = np.zeros(n, dtype=bool)
    if n == 0 or len(trips) == 0:
        return mask
    codes, uniques = pd.factorize(points["device_id"], sort=True)
    lookup = pd.Index(uniques)
    tcode = lookup.get_indexer(trips["device_id"])
    keep = tcode >= 0
    tcode = tcode[keep]
    dep = trips["departure_ts"].to_numpy(dtype=np.int64)[keep]
    arr = trips["arrival_ts"].to_numpy(dtype=np.int64)[keep]
    # (device, ts) packed into one sortable key; trips per device never overlap
    ts = points["ts"].to_numpy(dtype=np.int64)
    scale = np.int64(1) << 36
    pkey = codes.astype(np.int64) * scale + ts
    order = np.argsort(tcode.astype(np.int64) * scale + dep, kind="stable")
    skey = (tcode.astype(np.int64) * scale + dep)[order]
    ekey = (tcode.astype(np.int64) * scale + arr)[order]
    pos = np.searchsorted(skey, pkey, side="right") - 1
    valid = pos >= 0
    mask[valid] = pkey[valid] <= ekey[pos[valid]]
    return mask


class TripSegmenter(ClusterMixin, BaseEstimator):
    """Estimator interface to trip segmentation.

    After ``fit(X)`` on a cleaned sightings frame sorted by
    ``(device_id, ts)``:

    ``trips_``
        Trips surviving the minimum-length filter, with origin/destination
        zones when a zone index was given.
    ``labels_``
        Trip id per input row; ``"0"`` for static points and for points of
        trips removed by the length filter.
    ``n_short_removed_``
        Number of trips dropped for being shorter than ``min_trip_length_m``.
    """

    def __init__(self, distance_threshold_m=200.0, time_threshold_s=900.0, speed_threshold_mps=1.4,
                 min_trip_length_m=MIN_TRIP_LENGTH_M, n_jobs=None):
        self.distance_threshold_m = distance_threshold_m
        self.time_threshold_s = time_threshold_s
        self.speed_threshold_mps = speed_threshold_mps
        self.min_trip_length_m = min_trip_length_m
        self.n_jobs = n_jobs

    def fit(self, X, y=None, zones: ZoneIndex | None = None):
        cfg = TripConfig(self.distance_threshold_m, self.time_threshold_s,
                         self.speed_threshold_mps, self.min_trip_length_m)
        ann = annotate(X)
        raw, labeled = segment(ann, cfg, n_jobs=self.n_jobs)
        kept = filter_short(raw, cfg.min_trip_length_m)
        self.n_short_removed_ = len(raw) - len(kept)
        labels = labeled["trip_id"].to_numpy(dtype=object)
        if self.n_short_removed_:
            labels = np.where(np.isin(labels, kept["trip_id"].to_numpy()), labels, STATIC)
        self.labels_ = labels
        self.trips_ = assign_zones(kept, zones) if zones is not None else kept
        return self
