import math

import numpy as np
import pandas as pd
import pytest

from mobility_sdi.activity import (TWO_MILES_M, ActivityCluster, ActivityClusterer, ActivityProfiler, ClusterConfig,
                                   HomeWorkConfig, cluster_activities, dbscan_haversine, identify_home, identify_work,
                                   night_presence, select_home, select_work)
from mobility_sdi.geo import GeoPoint, Zone, ZoneIndex
from oracles import brute_dbscan

M_PER_DEG = math.pi * 6_371_000 / 180
H = 3600
D = 86400


def blob_points(rng, centers, sizes, sigma_m, lat0=40.0):
    lat, lon = [], []
    for (cy, cx), n in zip(centers, sizes):
        lat.extend(lat0 + (cy + rng.normal(0, sigma_m, n)) / M_PER_DEG)
        lon.extend(-75 + (cx + rng.normal(0, sigma_m, n)) / (M_PER_DEG * math.cos(math.radians(lat0))))
    return np.array(lat), np.array(lon)


def random_set(rng, n):
    k = int(rng.integers(1, 5))
    centers = rng.uniform(-600, 600, (k, 2))
    sizes = rng.multinomial(n, np.ones(k) / k)
    return blob_points(rng, centers, sizes, rng.uniform(10, 120))


def test_dbscan_matches_oracle_on_small_sets():
    rng = np.random.default_rng(77)
    checked = 0
    for trial in range(150):
        n = int(rng.integers(1, 201))
        lat, lon = random_set(rng, n)
        eps = float(rng.choice([30.0, 60.0, 100.0, 150.0]))
        mp = int(rng.integers(2, 8))
        want = brute_dbscan(lat, lon, eps, mp)
        for algo in ("pairs", "cover"):
            assert dbscan_haversine(lat, lon, eps, mp, algorithm=algo).tolist() == want, (trial, algo)
        checked += 1
    assert checked == 150


def test_dbscan_paths_agree_on_dense_sets():
    rng = np.random.default_rng(78)
    for trial in range(25):
        n = int(rng.integers(300, 2500))
        lat, lon = random_set(rng, n)
        # duplicates stress the cover path's cell balls
        lat[: n // 10] = lat[0]
        lon[: n // 10] = lon[0]
        eps = float(rng.choice([50.0, 100.0]))
        a = dbscan_haversine(lat, lon, eps, 5, algorithm="pairs")
        b = dbscan_haversine(lat, lon, eps, 5, algorithm="cover")
        assert np.array_equal(a, b), trial


def test_dbscan_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        dbscan_haversine([0.0], [0.0], 10.0, 1, algorithm="kd")


def device_frame(lat, lon, t0=0, step=60):
    n = len(lat)
    return pd.DataFrame({"device_id": "dev", "ts": t0 + step * np.arange(n, dtype=np.int64), "lat": lat, "lon": lon,
                         "trip_id": "0"})


def test_identical_points_one_cluster_zero_radius():
    clusters = cluster_activities(device_frame(np.full(10, 40.0), np.full(10, -75.0)))
    assert len(clusters) == 1
    assert clusters[0].radius_m == 0.0
    assert clusters[0].n_points == 10


def test_two_blobs_two_clusters_matching_oracle():
    rng = np.random.default_rng(3)
    lat, lon = blob_points(rng, [(0, 0), (10_000, 0)], [50, 50], 20.0)
    clusters = cluster_activities(device_frame(lat, lon))
    assert len(clusters) == 2
    want = brute_dbscan(lat, lon, 100.0, 5)
    assert sorted(set(want)) == [0, 1]
    assert sorted(c.n_points for c in clusters) == [want.count(0), want.count(1)]


def test_oversized_cluster_is_split_below_two_miles():
    # two dense 3 km strands joined by a thinner 2 km bridge: one 8 km cluster at eps 100 m
    ys = np.concatenate([np.arange(0, 3000, 10.0), np.arange(3025, 5000, 25.0), np.arange(5000, 8000, 10.0)])
    lat = 40.0 + ys / M_PER_DEG
    lon = np.full(len(ys), -75.0)
    whole = dbscan_haversine(lat, lon, 100.0, 5)
    assert whole.max() == 0  # a single cluster before capping
    clusters = cluster_activities(device_frame(lat, lon))
    assert len(clusters) >= 2
    assert all(c.radius_m <= TWO_MILES_M for c in clusters)


def test_radius_bound_on_random_devices():
    rng = np.random.default_rng(9)
    for _ in range(20):
        lat, lon = random_set(rng, 400)
        # stretch along one axis to produce over-wide clusters
        lat = 40.0 + (lat - 40.0) * rng.uniform(1, 12)
        for c in cluster_activities(device_frame(lat, lon)):
            assert c.radius_m <= TWO_MILES_M


def test_trip_rows_are_not_clustered_and_split_visits():
    lat = np.full(30, 40.0)
    lon = np.full(30, -75.0)
    df = device_frame(lat, lon)
    df.loc[10:14, "trip_id"] = "t1"
    est = ActivityClusterer().fit(df)
    assert len(est.clusters_) == 1
    assert est.labels_[10:15].tolist() == [-1] * 5
    assert len(est.clusters_[0].visits) == 2


# -- home / work ---------------------------------------------------------------

def _zones():
    sq = lambda lat0, lon0: (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + 1), GeoPoint(lat0 + 1, lon0 + 1),
                             GeoPoint(lat0 + 1, lon0))
    return ZoneIndex((Zone("ZH", "C1", "S", 10.0, sq(0, 0)), Zone("ZW", "C2", "S", 10.0, sq(0, 1))))


def cluster(cid, lon, visits):
    return ActivityCluster(cid, "d", GeoPoint(0.5, lon), 50.0, visits, float(sum(e - s for s, e in visits)))


def test_home_is_the_nightly_cluster():
    home = cluster("d:c0", 0.5, [(d * D + 18 * H, (d + 1) * D + 8 * H) for d in range(20)])
    work = cluster("d:c1", 1.5, [(d * D + 9 * H, d * D + 17 * H) for d in range(20)])
    zones = _zones()
    assert identify_home([work, home], zones) == "ZH"
    assert night_presence(home) == 20
    assert night_presence(work) == 0


def test_home_tie_broken_by_dwell():
    a = cluster("d:c0", 0.5, [(d * D + 20 * H, (d + 1) * D + 6 * H) for d in range(0, 6, 2)]
                + [(20 * D + 10 * H, 20 * D + 16 * H)])
    b = cluster("d:c1", 1.5, [(d * D + 20 * H, (d + 1) * D + 6 * H) for d in range(1, 6, 2)])
    # three nights each; the daytime visit gives a 36 h against 30 h
    assert night_presence(a) == night_presence(b) == 3
    assert select_home([b, a]).cluster_id == "d:c0"
    long_b = cluster("d:c1", 1.5, [(d * D + 18 * H, (d + 1) * D + 10 * H) for d in range(1, 6, 2)])
    assert night_presence(long_b) == 3
    assert select_home([a, long_b]).cluster_id == "d:c1"


def test_only_home_means_not_employed():
    home = cluster("d:c0", 0.5, [(d * D, (d + 1) * D - 60) for d in range(10)])
    assert identify_work([home], "d:c0", _zones()) is None


def test_night_shift_work_is_found():
    # 40 days; a 22:00-06:00 shift every other night, home from 07:00 until the next shift
    work_visits = [(d * D + 22 * H, (d + 1) * D + 6 * H) for d in range(0, 40, 2)]
    home_visits = [(0, 21 * H)] + [((d + 1) * D + 7 * H, (d + 2) * D + 21 * H) for d in range(0, 38, 2)]
    home = cluster("d:c0", 0.5, home_visits)
    work = cluster("d:c1", 1.5, work_visits)
    zones = _zones()
    assert night_presence(work) == 20
    h = select_home([home, work], zones)
    assert h.cluster_id == "d:c0"
    assert identify_work([home, work], h.cluster_id, zones, n_observed_days=40) == "ZW"


def test_rare_cluster_is_not_work():
    home = cluster("d:c0", 0.5, [(d * D + 18 * H, (d + 1) * D + 8 * H) for d in range(40)])
    rare = cluster("d:c1", 1.5, [(d * D + 9 * H, d * D + 17 * H) for d in (3, 17)])
    assert select_work([home, rare], "d:c0", 40) is None


def test_profiler_recovers_synthetic_truth(small_out, small_run):
    truth = small_out.truth_profiles.set_index("device_id")
    got = small_run.profiles.set_index("device_id")
    assert len(got) == len(truth)
    assert (got["home_zone"] == truth.loc[got.index, "home_zone"]).all()
    assert (got["employed"] == truth.loc[got.index, "employed"]).mean() > 0.97
    for clusters in small_run.clusters.values():
        assert all(c.radius_m <= TWO_MILES_M for c in clusters)


def test_profiler_parallel_identical(small_out, small_run):
    pts = small_run.cleaned.assign(trip_id="0")
    pts = pts[pts["device_id"].isin(sorted(pts["device_id"].unique())[:12])]
    zones = ZoneIndex(small_out.scenario.zones)
    a = ActivityProfiler(n_jobs=1).fit(pts, zones=zones)
    b = ActivityProfiler(n_jobs=2).fit(pts, zones=zones)
    pd.testing.assert_frame_equal(a.profiles_, b.profiles_)
    assert a.excluded_ == b.excluded_


def test_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(eps_m=5000.0)
    with pytest.raises(ValueError):
        ActivityProfiler().fit(pd.DataFrame({"device_id": [], "ts": [], "lat": [], "lon": []}))
    assert HomeWorkConfig().work_min_day_frac == 0.25
