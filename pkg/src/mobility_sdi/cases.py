"""Cumulative case time series: parsing, differencing, roll-up and SDI join."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._calendar import to_date
from .geo import ZoneIndex
from .ingest import ParseError, _read_text
from .metrics import NATION_ID
from .phase import split_weeks

logger = logging.getLogger(__name__)

CASE_COLUMNS = ["date", "level", "geo_id", "cumulative_confirmed", "new_confirmed"]
JOINED_COLUMNS = ["date", "geo_id", "sdi_smoothed", "new_confirmed", "new_per_thousand"]
FIGURE3_COLUMNS = ["geo_id", "sdi_before", "sdi_after", "sdi_pct_change", "cases_before_per_k", "cases_after_per_k"]


@dataclass
class CaseTable:
    records: pd.DataFrame
    corrections: int = 0
    errors: list[ParseError] = field(default_factory=list)


def parse_cases(source, key_columns=("county_id", "state_id")) -> CaseTable:
    """Parse a wide cumulative case CSV into county, state and nation records.

    The header holds ``key_columns`` followed by ISO date columns in strictly
    increasing order. The first key names the county, the second its state.
    New cases are day-over-day differences (the first column counts as new);
    negative differences are clamped to 0 and counted in ``corrections``.
    State and nation rows sum the county rows.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    keys = list(key_columns)
    if header is None or header[:len(keys)] != keys:
        raise ValueError(f"case header must start with {keys}")
    date_cols = header[len(keys):]
    if not date_cols:
        raise ValueError("case file has no date columns")
    try:
        dates = [to_date(c) for c in date_cols]
    except ValueError as exc:
        raise ValueError(f"bad date column: {exc}") from None
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValueError("case date columns must be strictly increasing")
    iso = [d.isoformat() for d in dates]

    counties, states, rows, errors = [], [], [], []
    for row in reader:
        ln = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            errors.append(ParseError(ln, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            vals = [float(v) for v in row[len(keys):]]
        except ValueError:
            errors.append(ParseError(ln, "unparsable case count"))
            continue
        if any(not np.isfinite(v) or v < 0 or v != int(v) for v in vals):
            errors.append(ParseError(ln, "case counts must be non-negative integers"))
            continue
        counties.append(row[0])
        states.append(row[1] if len(keys) > 1 else NATION_ID)
        rows.append(vals)
    cum = np.asarray(rows, dtype=np.int64).reshape(len(rows), len(iso))
    new = np.diff(cum, axis=1, prepend=0)
    corrections = int((new < 0).sum())
    if corrections:
        logger.info("cases: %d negative daily differences clamped to 0", corrections)
    new = np.maximum(new, 0)

    county = pd.DataFrame({
        "date": np.tile(iso, len(counties)),
        "level": "county",
        "geo_id": np.repeat(counties, len(iso)),
        "state_id": np.repeat(states, len(iso)),
        "cumulative_confirmed": cum.ravel(),
        "new_confirmed": new.ravel(),
    })
    state = (county.groupby(["state_id", "date"], sort=True)[["cumulative_confirmed", "new_confirmed"]]
             .sum().reset_index().rename(columns={"state_id": "geo_id"}))
    state["level"] = "state"
    nation = county.groupby("date", sort=True)[["cumulative_confirmed", "new_confirmed"]].sum().reset_index()
    nation["level"] = "nation"
    nation["geo_id"] = NATION_ID
    records = pd.concat([county.drop(columns="state_id"), state, nation], ignore_index=True)[CASE_COLUMNS]
    records = records.astype({"cumulative_confirmed": np.int64, "new_confirmed": np.int64})
    return CaseTable(records.reset_index(drop=True), corrections, errors)


def populations(zones: ZoneIndex) -> dict[tuple[str, str], float]:
    """Population per ``(level, geo_id)`` from the zone file."""
    out: dict[tuple[str, str], float] = {}
    for z in zones:
        for key in (("county", z.county_id), ("state", z.state_id), ("nation", NATION_ID)):
            out[key] = out.get(key, 0.0) + z.population
    return out


def per_thousand(records: pd.DataFrame, zones: ZoneIndex) -> pd.DataFrame:
    pops = populations(zones)
    out = records.copy()
    pop = np.array([pops.get((lvl, g), np.nan) for lvl, g in zip(out["level"], out["geo_id"])], dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out["new_per_thousand"] = np.where(pop > 0, out["new_confirmed"].to_numpy() * 1000.0 / pop, np.nan)
    return out


def join_with_sdi(cases: pd.DataFrame | CaseTable, sdi: pd.DataFrame, zones: ZoneIndex) -> pd.DataFrame:
    """Inner join of case records and SDI rows on ``(level, geo_id, date)``."""
    records = cases.records if isinstance(cases, CaseTable) else cases
    records = per_thousand(records, zones)
    geo_c = set(zip(records["level"], records["geo_id"]))
    geo_s = set(zip(sdi["level"], sdi["geo_id"]))
    only = sorted((geo_c ^ geo_s))
    if only:
        logger.info("cases/sdi: %d geographies present in only one source excluded", len(only))
    joined = sdi[["date", "level", "geo_id", "sdi_smoothed"]].merge(
        records[["date", "level", "geo_id", "new_confirmed", "new_per_thousand"]],
        on=["date", "level", "geo_id"], how="inner")
    if joined.empty:
        logger.warning("cases/sdi join is empty (no overlapping geographies and dates)")
    return joined.sort_values(["level", "geo_id", "date"], kind="stable").reset_index(drop=True)


def figure3_table(joined: pd.DataFrame, pivot_date, level: str = "state", n_days: int = 5) -> pd.DataFrame:
    """Week-before/after SDI and case-rate means per geography of one level."""
    rows = []
    sub = joined.loc[joined["level"] == level]
    for geo, g in sub.groupby("geo_id", sort=True):
        g = g.sort_values("date")
        try:
            sb, sa = split_weeks(g["sdi_smoothed"].to_numpy(), g["date"].to_numpy(), pivot_date, n_days)
            cb, ca = split_weeks(g["new_per_thousand"].to_numpy(), g["date"].to_numpy(), pivot_date, n_days)
        except ValueError as exc:
            logger.warning("figure 3 table: %s skipped (%s)", geo, exc)
            continue
        mb, ma = float(np.mean(sb)), float(np.mean(sa))
        rows.append((geo, mb, ma, 100.0 * (ma - mb) / mb if mb else np.nan, float(np.mean(cb)), float(np.mean(ca))))
    return pd.DataFrame(rows, columns=FIGURE3_COLUMNS)


def write_cases_wide(cumulative: pd.DataFrame, path) -> None:
    """Write a wide cumulative case file; ``cumulative`` is indexed by the key columns, one column per date."""
    cumulative.reset_index().to_csv(path, index=False, lineterminator="\n")


def write_joined(joined: pd.DataFrame, path) -> None:
    joined[JOINED_COLUMNS].to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
