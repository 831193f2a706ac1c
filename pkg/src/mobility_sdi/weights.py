"""Population expansion: county device weights and state trip-rate factors.

A device stands for ``county_population / devices_homed_in_county`` people.
Trips are further scaled per state of residence so that the weighted trip
rate over the calibration weekdays matches a target rate.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from ._calendar import weekdays
from ._validation import check_columns
from .geo import ZoneIndex

logger = logging.getLogger(__name__)

DEFAULT_TARGET_RATE = 4.0
WEIGHT_COLUMNS = ["device_id", "home_zone", "county_id", "state_id", "weight"]


class CalibrationError(ValueError):
    """A state has residents with a target rate but no observed trips."""


def calibration_dates(year: int) -> list[str]:
    return weekdays(f"{year}-02-01", f"{year}-02-14")


def county_device_weights(profiles: pd.DataFrame, zones: ZoneIndex
                          ) -> tuple[dict[str, float], pd.DataFrame, list[str]]:
    """Device weights by home county.

    Returns ``(county_weight, device_weights, excluded)``. ``device_weights``
    has one row per profiled device (columns :data:`WEIGHT_COLUMNS`);
    ``excluded`` lists counties with population but no devices, which cannot
    be represented and are left out of every aggregate.
    """
    check_columns(profiles, ["device_id", "home_zone"], "profiles")
    pops = zones.county_populations()
    home = profiles["home_zone"].to_numpy(dtype=object)
    unknown = sorted({z for z in home if z not in zones})
    if unknown:
        raise ValueError(f"profiles reference unknown zones: {unknown[:5]}")
    county = np.array([zones[z].county_id for z in home], dtype=object)
    state = np.array([zones[z].state_id for z in home], dtype=object)
    counts = pd.Series(county).value_counts().to_dict()
    county_weight = {c: (pops[c] / counts[c] if pops[c] > 0 else 0.0) for c in sorted(counts)}
    excluded = sorted(c for c, p in pops.items() if p > 0 and c not in counts)
    if excluded:
        logger.warning("counties without observed devices (excluded): %s", excluded)
    weights = pd.DataFrame({
        "device_id": profiles["device_id"].astype(str).to_numpy(),
        "home_zone": home,
        "county_id": county,
        "state_id": state,
        "weight": np.array([county_weight[c] for c in county], dtype=float),
    }, columns=WEIGHT_COLUMNS)
    return county_weight, weights.sort_values("device_id", kind="stable").reset_index(drop=True), excluded


def _target_for(state: str, target_rates) -> float:
    if isinstance(target_rates, Mapping):
        return float(target_rates.get(state, target_rates.get("default", DEFAULT_TARGET_RATE)))
    return float(target_rates)


def observed_trip_rates(trips: pd.DataFrame, device_weights: pd.DataFrame, dates,
                        panel: pd.DataFrame | None = None) -> pd.DataFrame:
    """Weighted trips per weighted person-day for residents of each state.

    ``trips`` needs ``device_id`` and ``date`` columns (local departure
    date); ``panel`` lists in-panel ``(device_id, date)`` pairs and defaults
    to every weighted device on every date.
    """
    dates = list(dates)
    dw = device_weights.set_index("device_id")
    t = trips.loc[trips["date"].isin(dates) & trips["device_id"].isin(dw.index)]
    tw = dw.loc[t["device_id"].to_numpy()]
    trip_sum = pd.Series(tw["weight"].to_numpy(), index=tw["state_id"].to_numpy()).groupby(level=0).sum()
    if panel is None:
        person_sum = device_weights.groupby("state_id")["weight"].sum() * len(dates)
    else:
        p = panel.loc[panel["date"].isin(dates) & panel["device_id"].isin(dw.index)]
        pw = dw.loc[p["device_id"].to_numpy()]
        person_sum = pd.Series(pw["weight"].to_numpy(), index=pw["state_id"].to_numpy()).groupby(level=0).sum()
    states = sorted(set(device_weights["state_id"]))
    out = pd.DataFrame({"state_id": states})
    out["weighted_trips"] = trip_sum.reindex(states).fillna(0.0).to_numpy()
    out["weighted_person_days"] = person_sum.reindex(states).fillna(0.0).to_numpy()
    with np.errstate(invalid="ignore", divide="ignore"):
        out["observed_rate"] = out["weighted_trips"] / out["weighted_person_days"]
    return out


def state_trip_weights(trips: pd.DataFrame, device_weights: pd.DataFrame, target_rates=DEFAULT_TARGET_RATE,
                       dates=None, panel: pd.DataFrame | None = None) -> dict[str, float]:
    """Per-state factor ``target_rate / observed_rate``.

    ``target_rates`` is a number or a ``{state_id: rate}`` map (a ``"default"``
    key, else 4.0, covers missing states). ``dates`` defaults to the
    Feb 1-14 weekdays of the trips' year.
    """
    if dates is None:
        if len(trips) == 0:
            raise CalibrationError("no trips to infer the calibration year from")
        dates = calibration_dates(int(str(min(trips["date"]))[:4]))
    rates = observed_trip_rates(trips, device_weights, dates, panel)
    factors = {}
    for row in rates.itertuples(index=False):
        target = _target_for(row.state_id, target_rates)
        if row.weighted_person_days <= 0:
            # state with zero-weight residents only contributes nothing
            factors[row.state_id] = 1.0
            continue
        if row.observed_rate <= 0:
            if target > 0:
                raise CalibrationError(f"state {row.state_id}: no observed trips in the calibration window")
            factors[row.state_id] = 1.0
            continue
        factors[row.state_id] = target / row.observed_rate
    return factors


def calibrated_rate(trips: pd.DataFrame, device_weights: pd.DataFrame, factors: Mapping[str, float], dates,
                    panel: pd.DataFrame | None = None) -> dict[str, float]:
    """Weighted trip rate after applying ``factors`` (equals the targets on the calibration dates)."""
    rates = observed_trip_rates(trips, device_weights, dates, panel)
    return {r.state_id: r.observed_rate * factors[r.state_id] for r in rates.itertuples(index=False)}


class DeviceWeighter(BaseEstimator):
    """``fit(profiles, zones=...)`` sets ``county_weights_``, ``weights_``, ``excluded_counties_``."""

    def fit(self, X, y=None, zones: ZoneIndex | None = None):
        if zones is None:
            raise ValueError("DeviceWeighter.fit needs a zone index")
        self.county_weights_, self.weights_, self.excluded_counties_ = county_device_weights(X, zones)
        return self

    def transform(self, X):
        w = self.weights_.set_index("device_id")["weight"]
        out = X.copy()
        out["weight"] = w.reindex(out["device_id"].astype(str)).to_numpy()
        return out


class TripRateCalibrator(BaseEstimator):
    """Estimates state trip factors; ``fit(trips, device_weights=..., panel=...)`` sets ``factors_``."""

    def __init__(self, target_rates=DEFAULT_TARGET_RATE, calibration_dates=None):
        self.target_rates = target_rates
        self.calibration_dates = calibration_dates

    def fit(self, X, y=None, device_weights: pd.DataFrame | None = None, panel: pd.DataFrame | None = None):
        if device_weights is None:
            raise ValueError("TripRateCalibrator.fit needs device_weights")
        self.factors_ = state_trip_weights(X, device_weights, self.target_rates, self.calibration_dates, panel)
        return self
