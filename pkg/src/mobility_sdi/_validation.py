"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np
import pandas as pd

SIGHTING_COLUMNS = ("device_id", "ts", "lat", "lon", "accuracy_m")


def check_positive(name: str, value, allow_zero: bool = False) -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return float(value)


def check_columns(X: pd.DataFrame, required, name: str = "X") -> pd.DataFrame:
    if not isinstance(X, pd.DataFrame):
        raise TypeError(f"{name} must be a pandas DataFrame, got {type(X).__name__}")
    missing = [c for c in required if c not in X.columns]
    if missing:
        raise ValueError(f"{name} is missing columns: {missing}")
    return X


def check_sightings(X: pd.DataFrame, require_sorted: bool = False) -> pd.DataFrame:
    """Validate a sightings frame and coerce column dtypes."""
    check_columns(X, SIGHTING_COLUMNS, "sightings")
    out = X.copy()
    out["device_id"] = out["device_id"].astype(str)
    out["ts"] = out["ts"].astype(np.int64)
    for col in ("lat", "lon", "accuracy_m"):
        out[col] = out[col].astype(float)
    if len(out):
        if not (out["lat"].between(-90, 90).all() and out["lon"].between(-180, 180).all()):
            raise ValueError("sightings contain out-of-range coordinates")
        if (out["ts"] <= 0).any():
            raise ValueError("sighting timestamps must be positive")
    if require_sorted and not is_sorted_by_device_ts(out):
        raise ValueError("sightings must be sorted by (device_id, ts) with strictly increasing ts")
    return out


def is_sorted_by_device_ts(X: pd.DataFrame) -> bool:
    if len(X) < 2:
        return True
    dev = X["device_id"].to_numpy()
    ts = X["ts"].to_numpy()
    same = dev[1:] == dev[:-1]
    dev_ok = bool(np.all(same | (dev[1:] > dev[:-1])))
    ts_ok = bool(np.all(~same | (ts[1:] > ts[:-1])))
    return dev_ok and ts_ok


def check_series(values, dates=None, name: str = "series") -> tuple[np.ndarray, np.ndarray | None]:
    """Return float values (and date array) after basic shape checks."""
    if isinstance(values, pd.Series):
        if dates is None:
            dates = values.index.to_numpy()
        values = values.to_numpy()
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if dates is not None:
        dates = np.asarray(dates)
        if len(dates) != len(arr):
            raise ValueError(f"{name}: dates and values differ in length")
    return arr, dates


def check_odd_window(window: int) -> int:
    if not isinstance(window, numbers.Integral) or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 1, got {window!r}")
    return int(window)
