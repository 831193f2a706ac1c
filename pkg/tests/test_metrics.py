import numpy as np
import pandas as pd
import pytest

from mobility_sdi.geo import GeoPoint, Zone, ZoneIndex
from mobility_sdi.metrics import (METERS_TO_MILES, METRIC_NAMES, NATION_ID, compute_benchmark, compute_metrics,
                                  daily_metrics, default_benchmark_dates, trip_increase_composition)
from mobility_sdi.phase import split_weeks
from mobility_sdi.synth import phase_values

MI = METERS_TO_MILES


def sq(lat0, lon0):
    return (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + 1), GeoPoint(lat0 + 1, lon0 + 1), GeoPoint(lat0 + 1, lon0))


def toy_world():
    zones = ZoneIndex((Zone("Z1", "C1", "S1", 20.0, sq(0, 0)), Zone("Z2", "C2", "S1", 30.0, sq(0, 1))))
    dw = pd.DataFrame({"device_id": ["a", "b", "c"], "home_zone": ["Z1", "Z1", "Z2"], "county_id": ["C1", "C1", "C2"],
                       "state_id": ["S1", "S1", "S1"], "weight": [10.0, 10.0, 30.0]})
    profiles = pd.DataFrame({"device_id": ["a", "b", "c"], "home_zone": ["Z1", "Z1", "Z2"],
                             "work_zone": ["Z2", None, None], "employed": [True, False, False]})
    trips = pd.DataFrame({
        "device_id": ["a", "a", "a", "c", "c"],
        "date": ["2020-02-03"] * 5,
        "o_zone": ["Z1", "Z2", "Z1", "Z2", "Z2"],
        "d_zone": ["Z2", "Z1", "Z1", "Z2", "Z1"],
        "distance_m": [5000.0, 5000.0, 1000.0, 2000.0, 3000.0],
    })
    panel = pd.DataFrame({"device_id": ["a", "b", "c", "a"],
                          "date": ["2020-02-03", "2020-02-03", "2020-02-03", "2020-02-04"]})
    return zones, dw, profiles, trips, panel


# Hand computation, factor 2 for S1. Monday: C1 holds a (3 trips, 2 of them work and out of county, 11 km)
# and b (home); C2 holds c (2 non-work trips, 1 out of county, 5 km). Tuesday: only a, at home.
HAND = {
    ("2020-02-03", "county", "C1"): [10 / 20, 40 / 20, 20 / 20, 60 / 20, 20 * 11000 * MI / 20, 40 / 60],
    ("2020-02-03", "county", "C2"): [0.0, 0.0, 120 / 30, 120 / 30, 60 * 5000 * MI / 30, 60 / 120],
    ("2020-02-03", "state", "S1"): [10 / 50, 40 / 50, 140 / 50, 180 / 50, (20 * 11000 + 60 * 5000) * MI / 50,
                                    100 / 180],
    ("2020-02-04", "county", "C1"): [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
}


def test_two_county_hand_computation():
    zones, dw, profiles, trips, panel = toy_world()
    m = compute_metrics(trips, profiles, dw, {"S1": 2.0}, zones, panel=panel)
    got = {(r.date, r.level, r.geo_id): [getattr(r, c) for c in METRIC_NAMES] for r in m.itertuples()}
    for key, want in HAND.items():
        assert got[key] == pytest.approx(want, rel=1e-12, abs=1e-15), key
    assert got[("2020-02-03", "nation", NATION_ID)] == got[("2020-02-03", "state", "S1")]
    # C2 has nobody in panel on Tuesday: the row is omitted
    assert ("2020-02-04", "county", "C2") not in got


def test_nobody_travels():
    zones, dw, profiles, trips, panel = toy_world()
    m = compute_metrics(trips.iloc[:0], profiles, dw, {"S1": 2.0}, zones, panel=panel)
    assert (m["pct_staying_home"] == 1.0).all()
    assert (m[METRIC_NAMES[1:]] == 0.0).all().all()


def test_daily_metrics_is_one_day_of_compute_metrics():
    zones, dw, profiles, trips, panel = toy_world()
    full = compute_metrics(trips, profiles, dw, {"S1": 2.0}, zones, panel=panel)
    one = daily_metrics(trips, profiles, dw, {"S1": 2.0}, zones, "2020-02-03", panel=panel)
    pd.testing.assert_frame_equal(one, full[full["date"] == "2020-02-03"].reset_index(drop=True))


def test_removing_out_of_county_trips():
    zones, dw, profiles, trips, panel = toy_world()
    base = compute_metrics(trips, profiles, dw, None, zones, panel=panel)
    inside = trips[[zones[o].county_id == zones[d].county_id for o, d in zip(trips["o_zone"], trips["d_zone"])]]
    m = compute_metrics(inside, profiles, dw, None, zones, panel=panel)
    assert (m["pct_out_of_county"] == 0).all()
    assert m["pct_staying_home"].tolist() == base["pct_staying_home"].tolist()


def test_levels_roll_up(small_run):
    m = small_run.metrics
    assert np.array_equal(m["trips_pp"], m["work_trips_pp"] + m["nonwork_trips_pp"])
    assert (m[METRIC_NAMES] >= 0).all().all()
    assert m[["pct_staying_home", "pct_out_of_county"]].le(1).all().all()
    for date, g in m.groupby("date"):
        st = g[g["level"] == "state"]
        nat = g[g["level"] == "nation"].iloc[0]
        cty = g[g["level"] == "county"]
        for col in ("pct_staying_home", "work_trips_pp", "nonwork_trips_pp", "trips_pp", "miles_pp"):
            assert nat[col] == pytest.approx(np.average(st[col], weights=st["persons"]), rel=1e-9)
            assert nat[col] == pytest.approx(np.average(cty[col], weights=cty["persons"]), rel=1e-9)


def test_benchmark_basics():
    m = pd.DataFrame({"date": ["2020-02-03", "2020-02-04"], "level": "nation", "geo_id": "US",
                      **{c: [0.5, 0.5] for c in METRIC_NAMES}})
    b = compute_benchmark(m, ["2020-02-03", "2020-02-04"])
    assert b[METRIC_NAMES].iloc[0].tolist() == [0.5] * 6
    m.loc[1, METRIC_NAMES] = 0.9
    one = compute_benchmark(m, ["2020-02-04"])
    assert one[METRIC_NAMES].iloc[0].tolist() == pytest.approx([0.9] * 6)
    with pytest.raises(ValueError, match="missing"):
        compute_benchmark(m, ["2020-02-05"])
    with pytest.raises(ValueError):
        compute_benchmark(m, [])
    assert default_benchmark_dates(2020) == ["2020-02-03", "2020-02-04", "2020-02-05", "2020-02-06", "2020-02-07",
                                             "2020-02-10", "2020-02-11", "2020-02-12", "2020-02-13", "2020-02-14"]


def scripted_expectation(scenario):
    """Baseline metric values implied by the scenario's first phase."""
    home, work, nonwork, km, out = phase_values(scenario).loc["2020-02-03"]
    trips = work + nonwork
    return {"pct_staying_home": home, "work_trips_pp": work, "nonwork_trips_pp": nonwork, "trips_pp": trips,
            "miles_pp": trips * km * 1000 * MI, "pct_out_of_county": out}


def test_benchmark_matches_scripted_baseline(paper_run):
    bench = paper_run.res.benchmark
    nat = bench[bench["level"] == "nation"].iloc[0]
    for col, want in scripted_expectation(paper_run.out.scenario).items():
        if col.startswith("pct_"):
            assert abs(nat[col] - want) <= 0.03, col
        else:
            assert nat[col] == pytest.approx(want, rel=0.03), col


PAPER_MAGNITUDES = {
    "pct_staying_home": (0.34, 0.315),
    "trips_pp": (2.75, 3.0),
    "nonwork_trips_pp": (2.3, 2.5),
    "miles_pp": (23.6, 24.7),
}


def test_fatigue_window_magnitudes(paper_run):
    m = paper_run.res.metrics
    nat = m[m["level"] == "nation"]
    pivot = paper_run.out.scenario.fatigue_date
    for col, (before, after) in PAPER_MAGNITUDES.items():
        b, a = split_weeks(nat[col].to_numpy(), nat["date"].to_numpy(), pivot)
        assert b.mean() == pytest.approx(before, rel=0.10), col
        assert a.mean() == pytest.approx(after, rel=0.10), col


def test_composition_split():
    m = pd.DataFrame({"date": ["d1", "d2"], "level": "nation", "geo_id": "US", "work_trips_pp": [0.4, 0.5],
                      "nonwork_trips_pp": [2.0, 2.4]})
    c = trip_increase_composition(m, ["d1"], ["d2"])
    assert c["nonwork_share"] == pytest.approx(0.8)
    assert c["total_change"] == pytest.approx(0.5)
    flat = trip_increase_composition(m, ["d1"], ["d1"])
    assert np.isnan(flat["nonwork_share"])
