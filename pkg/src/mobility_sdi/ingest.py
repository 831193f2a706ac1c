"""Sighting parsing and four-dimension cleaning.

The cleaning dimensions are made concrete as:

* consistency  -- duplicate ``(device_id, ts)`` records collapse to the first one;
* accuracy     -- records with ``accuracy_m`` above the cutoff are dropped;
* timeliness   -- a record implying travel faster than the plausible speed
                  from the previous kept record of the device is dropped;
* completeness -- device-days (UTC) with too few records are dropped whole.

Timeliness and completeness are repeated until neither removes anything,
which makes :func:`clean` idempotent.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import IO

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import SIGHTING_COLUMNS, check_positive, check_sightings
from .geo import GeoPoint, haversine_np

logger = logging.getLogger(__name__)

SIGHTINGS_HEADER = ",".join(SIGHTING_COLUMNS)


@dataclass(frozen=True)
class Sighting:
    device_id: str
    ts: int
    point: GeoPoint
    accuracy_m: float

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        if not np.isfinite(self.accuracy_m) or self.accuracy_m < 0:
            raise ValueError("accuracy_m must be finite and non-negative")


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str


@dataclass(frozen=True)
class CleaningConfig:
    max_accuracy_m: float = 100.0
    max_plausible_speed_kmh: float = 1000.0
    min_sightings_per_device_day: int = 3
    require_monotone_dedupe: bool = True

    def __post_init__(self):
        check_positive("max_accuracy_m", self.max_accuracy_m)
        check_positive("max_plausible_speed_kmh", self.max_plausible_speed_kmh)
        check_positive("min_sightings_per_device_day", self.min_sightings_per_device_day)


@dataclass
class CleaningReport:
    records_in: int = 0
    records_out: int = 0
    consistency: int = 0
    accuracy: int = 0
    completeness: int = 0
    timeliness: int = 0

    def __add__(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                                 for f in fields(self)})

    @property
    def dropped(self) -> int:
        return self.consistency + self.accuracy + self.completeness + self.timeliness

    def balanced(self) -> bool:
        return self.records_out + self.dropped == self.records_in

    def to_dict(self) -> dict:
        return asdict(self)


def empty_sightings() -> pd.DataFrame:
    return pd.DataFrame({
        "device_id": pd.Series([], dtype=object),
        "ts": pd.Series([], dtype=np.int64),
        "lat": pd.Series([], dtype=float),
        "lon": pd.Series([], dtype=float),
        "accuracy_m": pd.Series([], dtype=float),
    })


def _read_text(source) -> str:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, bytes):
        raw = source
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    return raw


def _validate_rows(raw: pd.DataFrame, line_numbers: np.ndarray) -> tuple[pd.DataFrame, list[ParseError]]:
    errors: dict[int, str] = {}
    n = len(raw)
    bad = np.zeros(n, dtype=bool)

    def flag(mask, msg):
        new = mask & ~bad
        for ln in line_numbers[new]:
            errors[int(ln)] = msg
        bad[:] = bad | mask

    dev = raw["device_id"].fillna("").astype(str)
    flag((dev.str.len() == 0).to_numpy(), "empty device_id")

    ts = pd.to_numeric(raw["ts"], errors="coerce").to_numpy(dtype=float)
    flag(~np.isfinite(ts) | (ts != np.floor(ts)) | (ts <= 0), "ts is not a positive integer")

    lat = pd.to_numeric(raw["lat"], errors="coerce").to_numpy(dtype=float)
    lon = pd.to_numeric(raw["lon"], errors="coerce").to_numpy(dtype=float)
    flag(~np.isfinite(lat) | ~np.isfinite(lon), "lat/lon not numeric")
    flag((np.abs(lat) > 90) | (np.abs(lon) > 180), "lat/lon out of range")

    acc = pd.to_numeric(raw["accuracy_m"], errors="coerce").to_numpy(dtype=float)
    flag(~np.isfinite(acc) | (acc < 0), "accuracy_m not a finite non-negative number")

    keep = ~bad
    out = pd.DataFrame({
        "device_id": dev.to_numpy()[keep],
        "ts": ts[keep].astype(np.int64),
        "lat": lat[keep],
        "lon": lon[keep],
        "accuracy_m": acc[keep],
    })
    errs = [ParseError(ln, msg) for ln, msg in sorted(errors.items())]
    return out, errs


def _parse_slow(text: str) -> tuple[pd.DataFrame, list[ParseError]]:
    # row-by-row path, used when the fast reader chokes on ragged rows
    rows, lines, errs = [], [], []
    reader = csv.reader(io.StringIO(text))
    next(reader, None)
    for row in reader:
        ln = reader.line_num
        if len(row) != len(SIGHTING_COLUMNS):
            errs.append(ParseError(ln, f"expected {len(SIGHTING_COLUMNS)} fields, got {len(row)}"))
            continue
        rows.append(row)
        lines.append(ln)
    raw = pd.DataFrame(rows, columns=list(SIGHTING_COLUMNS), dtype=object)
    out, more = _validate_rows(raw, np.asarray(lines, dtype=np.int64))
    errs = sorted(errs + more, key=lambda e: e.line)
    return out, errs


def parse_sightings(source: str | Path | bytes | IO) -> tuple[pd.DataFrame, list[ParseError]]:
    """Parse a sightings CSV.

    Returns the well-formed rows as a frame with columns
    ``device_id, ts, lat, lon, accuracy_m`` plus a list of per-line errors
    for malformed rows (which are skipped, never silently dropped).
    An unreadable source or a wrong header raises.
    """
    text = _read_text(source)
    first_nl = text.find("\n")
    header = (text if first_nl < 0 else text[:first_nl]).rstrip("\r")
    if header != SIGHTINGS_HEADER:
        raise ValueError(f"unexpected sightings header {header!r}, expected {SIGHTINGS_HEADER!r}")
    if first_nl < 0 or not text[first_nl + 1:].strip():
        return empty_sightings(), []
    try:
        raw = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False,
                          na_filter=False, skip_blank_lines=False, engine="c")
    except pd.errors.ParserError:
        return _parse_slow(text)
    if list(raw.columns) != list(SIGHTING_COLUMNS):
        return _parse_slow(text)
    lines = np.arange(len(raw), dtype=np.int64) + 2
    return _validate_rows(raw, lines)


def format_sightings(df: pd.DataFrame) -> str:
    parts = [SIGHTINGS_HEADER]
    parts.extend(
        f"{d},{t},{la:.6f},{lo:.6f},{a:.1f}"
        for d, t, la, lo, a in zip(df["device_id"].tolist(), df["ts"].tolist(), df["lat"].tolist(),
                                   df["lon"].tolist(), df["accuracy_m"].tolist())
    )
    return "\n".join(parts) + "\n"


def write_sightings(df: pd.DataFrame, dest: str | Path | IO) -> None:
    """Write sightings as UTF-8 CSV with LF line endings and fixed float formats."""
    text = format_sightings(df)
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        dest.write(text)


def sort_sightings(df: pd.DataFrame) -> pd.DataFrame:
    codes, _ = pd.factorize(df["device_id"], sort=True)
    order = np.lexsort((np.arange(len(df)), df["ts"].to_numpy(), codes))
    return df.iloc[order].reset_index(drop=True)


def _teleport_keep(dev_codes, ts, lat, lon, max_speed_mps) -> np.ndarray:
    """Sequential scan: keep a record iff reachable from the last kept one."""
    n = len(ts)
    keep = np.ones(n, dtype=bool)
    if n < 2:
        return keep
    d = haversine_np(lat[:-1], lon[:-1], lat[1:], lon[1:])
    dt = (ts[1:] - ts[:-1]).astype(float)
    same = dev_codes[1:] == dev_codes[:-1]
    fast = same & (d > max_speed_mps * dt)
    if not fast.any():
        return keep
    bad_devs = np.unique(dev_codes[1:][fast])
    for code in bad_devs:
        idx = np.flatnonzero(dev_codes == code)
        last = idx[0]
        for i in idx[1:]:
            dist = haversine_np(lat[last], lon[last], lat[i], lon[i])
            if dist > max_speed_mps * float(ts[i] - ts[last]):
                keep[i] = False
            else:
                last = i
    return keep


def clean(sightings: pd.DataFrame, cfg: CleaningConfig | None = None) -> tuple[pd.DataFrame, CleaningReport]:
    """Apply the cleaning procedure; returns the cleaned frame and a balanced report."""
    cfg = cfg or CleaningConfig()
    df = check_sightings(sightings)
    report = CleaningReport(records_in=len(df))
    codes, _ = pd.factorize(df["device_id"], sort=True)
    ts = df["ts"].to_numpy(dtype=np.int64)
    order = np.lexsort((np.arange(len(df)), ts, codes))
    codes, ts = codes[order].astype(np.int64), ts[order]

    dup = np.zeros(len(ts), dtype=bool)
    if len(ts) > 1:
        dup[1:] = (codes[1:] == codes[:-1]) & (ts[1:] == ts[:-1])
    if dup.any() and not cfg.require_monotone_dedupe:
        raise ValueError("duplicate (device_id, ts) records and require_monotone_dedupe is off")
    report.consistency = int(dup.sum())

    acc = df["accuracy_m"].to_numpy()[order]
    bad_acc = ~dup & ~(acc <= cfg.max_accuracy_m)
    report.accuracy = int(bad_acc.sum())
    rows = order[~dup & ~bad_acc]
    codes, ts = codes[~dup & ~bad_acc], ts[~dup & ~bad_acc]
    lat = df["lat"].to_numpy(dtype=float)[rows]
    lon = df["lon"].to_numpy(dtype=float)[rows]

    max_speed = cfg.max_plausible_speed_kmh / 3.6
    while True:
        keep = _teleport_keep(codes, ts, lat, lon, max_speed)
        n_tele = int((~keep).sum())
        report.timeliness += n_tele
        rows, codes, ts, lat, lon = rows[keep], codes[keep], ts[keep], lat[keep], lon[keep]
        # rows stay sorted by (device, ts), so device-days form contiguous runs
        day = ts // 86400
        start = np.ones(len(ts), dtype=bool)
        if len(ts) > 1:
            start[1:] = (codes[1:] != codes[:-1]) | (day[1:] != day[:-1])
        run = np.cumsum(start) - 1
        sparse = np.bincount(run)[run] < cfg.min_sightings_per_device_day if len(ts) else start
        n_sparse = int(sparse.sum())
        report.completeness += n_sparse
        rows, codes, ts, lat, lon = rows[~sparse], codes[~sparse], ts[~sparse], lat[~sparse], lon[~sparse]
        if n_tele == 0 and n_sparse == 0:
            break
    df = df.iloc[rows].reset_index(drop=True)
    report.records_out = len(df)
    logger.info("cleaning: %s", report)
    return df, report


class SightingCleaner(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`clean`.

    ``transform`` returns the cleaned frame and stores the drop counters of
    the most recent call in ``report_``.
    """

    def __init__(self, max_accuracy_m=100.0, max_plausible_speed_kmh=1000.0,
                 min_sightings_per_device_day=3, require_monotone_dedupe=True):
        self.max_accuracy_m = max_accuracy_m
        self.max_plausible_speed_kmh = max_plausible_speed_kmh
        self.min_sightings_per_device_day = min_sightings_per_device_day
        self.require_monotone_dedupe = require_monotone_dedupe

    def _config(self) -> CleaningConfig:
        return CleaningConfig(self.max_accuracy_m, self.max_plausible_speed_kmh,
                              self.min_sightings_per_device_day, self.require_monotone_dedupe)

    def fit(self, X, y=None):
        self.config_ = self._config()
        check_sightings(X)
        return self

    def transform(self, X):
        cleaned, self.report_ = clean(X, getattr(self, "config_", None) or self._config())
        return cleaned
