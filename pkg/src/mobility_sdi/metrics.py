"""Daily population-weighted mobility metrics and their benchmark.

Every in-panel resident contributes its device weight ``w`` as a person;
each of its trips counts ``w * factor(home state)``. County rows aggregate
residents by home county, state and nation rows sum the same contributions,
so higher levels are exact weighted roll-ups of lower ones.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping

import numpy as np
import pandas as pd

from ._calendar import day_to_iso, is_weekday, local_day, weekdays
from ._validation import check_columns
from .geo import ZoneIndex

logger = logging.getLogger(__name__)

METERS_TO_MILES = 0.000621371
NATION_ID = "US"
LEVELS = ("county", "state", "nation")
METRIC_NAMES = ["pct_staying_home", "work_trips_pp", "nonwork_trips_pp", "trips_pp", "miles_pp",
                "pct_out_of_county"]
METRICS_COLUMNS = ["date", "level", "geo_id"] + METRIC_NAMES


def default_benchmark_dates(year: int) -> list[str]:
    return weekdays(f"{year}-02-03", f"{year}-02-14")


def _home_offsets(device_ids, device_weights: pd.DataFrame, zones: ZoneIndex) -> np.ndarray:
    home = device_weights.set_index("device_id")["home_zone"]
    zone_off = {z.zone_id: z.utc_offset_hours for z in zones}
    hz = home.reindex(pd.Index(device_ids).astype(str)).to_numpy(dtype=object)
    return np.array([zone_off.get(z, 0.0) for z in hz], dtype=float)


def panel_days(sightings: pd.DataFrame, device_weights: pd.DataFrame, zones: ZoneIndex) -> pd.DataFrame:
    """Distinct ``(device_id, date)`` pairs with at least one cleaned sighting.

    Dates are local to the device's home zone; unweighted devices are skipped.
    """
    s = sightings.loc[sightings["device_id"].isin(device_weights["device_id"])]
    day = local_day(s["ts"].to_numpy(), _home_offsets(s["device_id"].to_numpy(), device_weights, zones))
    pairs = pd.DataFrame({"device_id": s["device_id"].astype(str).to_numpy(), "day": day}).drop_duplicates()
    pairs = pairs.sort_values(["device_id", "day"], kind="stable").reset_index(drop=True)
    return pd.DataFrame({"device_id": pairs["device_id"], "date": day_to_iso(pairs["day"].to_numpy())})


def trip_dates(trips: pd.DataFrame, device_weights: pd.DataFrame, zones: ZoneIndex) -> pd.DataFrame:
    """Copy of ``trips`` with a ``date`` column (local departure date at home)."""
    out = trips.copy()
    off = _home_offsets(out["device_id"].to_numpy(), device_weights, zones)
    out["date"] = day_to_iso(local_day(out["departure_ts"].to_numpy(), off)) if len(out) else []
    return out


def compute_metrics(trips: pd.DataFrame, profiles: pd.DataFrame, device_weights: pd.DataFrame,
                    trip_factors: Mapping[str, float] | None, zones: ZoneIndex,
                    panel: pd.DataFrame | None = None, dates=None, weekdays_only: bool = True) -> pd.DataFrame:
    """Metric rows for every date, at county, state and nation level.

    ``trips`` must carry ``date`` (see :func:`trip_dates`), ``o_zone``,
    ``d_zone`` and ``distance_m``. ``panel`` holds in-panel
    ``(device_id, date)`` pairs; ``None`` treats every weighted device as
    in-panel on every date in ``dates``. The returned frame also carries the
    weighted ``persons`` behind each row.
    """
    check_columns(trips, ["device_id", "date", "o_zone", "d_zone", "distance_m"], "trips")
    dw = device_weights.merge(profiles[["device_id", "work_zone"]], on="device_id", how="left")
    factors = trip_factors or {}
    dw["factor"] = [float(factors.get(s, 1.0)) for s in dw["state_id"]]
    if panel is None:
        if dates is None:
            dates = sorted(set(trips["date"]))
        panel = pd.DataFrame([(d, t) for d in dw["device_id"] for t in dates], columns=["device_id", "date"])
    elif dates is not None:
        panel = panel.loc[panel["date"].isin(list(dates))]
    if weekdays_only:
        wd = {d: is_weekday(d) for d in set(panel["date"])}
        panel = panel.loc[panel["date"].map(wd).astype(bool)] if len(panel) else panel
    p = panel.merge(dw, on="device_id", how="inner")

    t = trips[["device_id", "date", "o_zone", "d_zone", "distance_m"]].merge(
        p[["device_id", "date", "work_zone"]], on=["device_id", "date"], how="inner")
    wz = t["work_zone"].to_numpy(dtype=object)
    has_work = pd.notna(wz)
    is_work = has_work & ((t["o_zone"].to_numpy(dtype=object) == wz) | (t["d_zone"].to_numpy(dtype=object) == wz))
    county = {z.zone_id: z.county_id for z in zones}
    oc = np.array([county.get(z) for z in t["o_zone"]], dtype=object)
    dc = np.array([county.get(z) for z in t["d_zone"]], dtype=object)
    out_cty = pd.isna(oc) | pd.isna(dc) | (oc != dc)
    per_dd = pd.DataFrame({
        "device_id": t["device_id"].to_numpy(),
        "date": t["date"].to_numpy(),
        "n": 1.0,
        "n_work": is_work.astype(float),
        "miles": t["distance_m"].to_numpy(dtype=float) * METERS_TO_MILES,
        "n_out": out_cty.astype(float),
    }).groupby(["device_id", "date"], sort=False).sum()
    p = p.merge(per_dd, left_on=["device_id", "date"], right_index=True, how="left")
    for c in ("n", "n_work", "miles", "n_out"):
        p[c] = p[c].fillna(0.0)
    w = p["weight"].to_numpy(dtype=float)
    wf = w * p["factor"].to_numpy(dtype=float)
    contrib = pd.DataFrame({
        "date": p["date"].to_numpy(),
        "county_id": p["county_id"].to_numpy(),
        "state_id": p["state_id"].to_numpy(),
        "persons": w,
        "stay": w * (p["n"].to_numpy() == 0),
        "work": wf * p["n_work"].to_numpy(),
        "nonwork": wf * (p["n"].to_numpy() - p["n_work"].to_numpy()),
        "trips_w": wf * p["n"].to_numpy(),
        "miles": wf * p["miles"].to_numpy(),
        "out": wf * p["n_out"].to_numpy(),
    })
    sums = ["persons", "stay", "work", "nonwork", "trips_w", "miles", "out"]
    frames = []
    for level, key in (("county", "county_id"), ("state", "state_id"), ("nation", None)):
        if key is None:
            g = contrib.groupby("date", sort=True)[sums].sum().reset_index()
            g["geo_id"] = NATION_ID
        else:
            g = contrib.groupby(["date", key], sort=True)[sums].sum().reset_index().rename(columns={key: "geo_id"})
        g["level"] = level
        frames.append(g)
    agg = pd.concat(frames, ignore_index=True)
    empty = agg["persons"] <= 0
    if empty.any():
        logger.info("metrics: %d geography-days with zero weighted persons omitted", int(empty.sum()))
        agg = agg.loc[~empty]
    persons = agg["persons"].to_numpy()
    work_pp = agg["work"].to_numpy() / persons
    nonwork_pp = agg["nonwork"].to_numpy() / persons
    trips_w = agg["trips_w"].to_numpy()
    out_share = np.divide(agg["out"].to_numpy(), trips_w, out=np.zeros(len(agg)), where=trips_w > 0)
    res = pd.DataFrame({
        "date": agg["date"].to_numpy(),
        "level": agg["level"].to_numpy(),
        "geo_id": agg["geo_id"].astype(str).to_numpy(),
        "pct_staying_home": agg["stay"].to_numpy() / persons,
        "work_trips_pp": work_pp,
        "nonwork_trips_pp": nonwork_pp,
        "trips_pp": work_pp + nonwork_pp,
        "miles_pp": agg["miles"].to_numpy() / persons,
        "pct_out_of_county": out_share,
        "persons": persons,
    })
    res["_lvl"] = res["level"].map({lvl: k for k, lvl in enumerate(LEVELS)})
    res = res.sort_values(["date", "_lvl", "geo_id"], kind="stable").drop(columns="_lvl")
    return res.reset_index(drop=True)


def daily_metrics(trips_of_day: pd.DataFrame, profiles: pd.DataFrame, device_weights: pd.DataFrame,
                  trip_factors: Mapping[str, float] | None, zone_index: ZoneIndex, date,
                  panel: pd.DataFrame | None = None) -> pd.DataFrame:
    """Metric rows of a single date (see :func:`compute_metrics`)."""
    date = str(date)
    t = trips_of_day.loc[trips_of_day["date"] == date] if "date" in trips_of_day.columns else \
        trips_of_day.assign(date=date)
    return compute_metrics(t, profiles, device_weights, trip_factors, zone_index, panel, dates=[date],
                           weekdays_only=False)


def compute_benchmark(metrics: pd.DataFrame, benchmark_dates) -> pd.DataFrame:
    """Per-geography mean of each metric over ``benchmark_dates``."""
    bench = [str(d) for d in benchmark_dates]
    if not bench:
        raise ValueError("benchmark_dates is empty")
    sub = metrics.loc[metrics["date"].isin(bench)]
    geos = metrics[["level", "geo_id"]].drop_duplicates()
    have = sub.groupby(["level", "geo_id"])["date"].nunique()
    missing = []
    for lvl, geo in geos.itertuples(index=False):
        if have.get((lvl, geo), 0) != len(set(bench)):
            missing.append(f"{lvl}:{geo}")
    if missing:
        raise ValueError(f"benchmark dates missing for {len(missing)} geographies, e.g. {missing[:3]}")
    out = sub.groupby(["level", "geo_id"], sort=False)[METRIC_NAMES].mean().reset_index()
    return out


def trip_increase_composition(metrics: pd.DataFrame, before_dates, after_dates, level: str = "nation",
                              geo_id: str = NATION_ID) -> dict[str, float]:
    """Split the change in trips per person between two windows into work and non-work.

    ``nonwork_share`` is the non-work change over the total change (NaN when
    the total does not move).
    """
    g = metrics.loc[(metrics["level"] == level) & (metrics["geo_id"] == geo_id)]
    if g.empty:
        raise ValueError(f"no metrics for {level}:{geo_id}")
    b = g.loc[g["date"].isin([str(d) for d in before_dates])]
    a = g.loc[g["date"].isin([str(d) for d in after_dates])]
    if b.empty or a.empty:
        raise ValueError("both windows need at least one metric row")
    d_work = float(a["work_trips_pp"].mean() - b["work_trips_pp"].mean())
    d_nonwork = float(a["nonwork_trips_pp"].mean() - b["nonwork_trips_pp"].mean())
    total = d_work + d_nonwork
    return {"work_change": d_work, "nonwork_change": d_nonwork, "total_change": total,
            "nonwork_share": d_nonwork / total if total != 0 else float("nan")}


def write_metrics(metrics: pd.DataFrame, path) -> None:
    metrics[METRICS_COLUMNS].to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def read_metrics(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"date": str, "level": str, "geo_id": str})
    check_columns(df, METRICS_COLUMNS, "metrics")
    return df
