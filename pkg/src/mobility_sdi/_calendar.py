"""Day arithmetic shared by the aggregation stages.

Dates travel through frames as ISO ``YYYY-MM-DD`` strings; internally a
day is an integer count of days since the Unix epoch.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

DAY_S = 86400


def to_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return dt.date.fromisoformat(str(value.astype("datetime64[D]")))
    return dt.date.fromisoformat(str(value))


def weekdays(start, end) -> list[str]:
    """ISO dates of Monday-Friday days in ``[start, end]``."""
    days = np.arange(np.datetime64(to_date(start)), np.datetime64(to_date(end)) + 1)
    keep = np.is_busday(days)
    return [str(d) for d in days[keep]]


def is_weekday(value) -> bool:
    return to_date(value).weekday() < 5


def local_day(ts, offset_hours=0.0) -> np.ndarray:
    """Local calendar day number of epoch seconds under a fixed UTC offset."""
    ts = np.asarray(ts, dtype=np.int64)
    off = np.round(np.asarray(offset_hours, dtype=float) * 3600).astype(np.int64)
    return (ts + off) // DAY_S


def day_to_iso(day) -> np.ndarray:
    return np.asarray(day, dtype="int64").astype("datetime64[D]").astype(str)


def iso_to_day(iso) -> np.ndarray:
    return np.asarray(iso, dtype="datetime64[D]").astype(np.int64)
