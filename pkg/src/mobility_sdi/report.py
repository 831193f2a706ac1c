"""Standalone SVG charts (metrics + SDI, SDI + ROC with phases, before/after per geography).

Charts are written by hand as plain SVG text: no plotting library, stable
output for identical inputs, and the plotted numbers are embedded as an
XML comment so a chart can be audited without its CSV.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .metrics import NATION_ID

WIDTH = 960
HEIGHT = 540
MARGIN = (50, 70, 60, 70)  # top, right, bottom, left
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]

FIG1_COLUMNS = ["date", "sdi", "sdi_smoothed", "pct_staying_home", "work_trips_rel", "nonwork_trips_rel",
                "miles_rel", "out_of_county_rel"]
FIG2_COLUMNS = ["date", "sdi_smoothed", "roc", "phase"]
FIG3_COLUMNS = ["geo_id", "sdi_before", "sdi_after", "sdi_pct_change", "cases_before_per_k", "cases_after_per_k"]


def _num(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _comment_table(frame: pd.DataFrame) -> str:
    lines = [",".join(frame.columns)]
    for row in frame.itertuples(index=False):
        lines.append(",".join(_num(v) for v in row))
    body = "\n".join(lines)
    # "--" is not allowed inside XML comments
    while "--" in body:
        body = body.replace("--", "- -")
    return f"<!-- data\n{body}\n-->"


class _Svg:
    def __init__(self, title: str, width: int = WIDTH, height: int = HEIGHT):
        self.width, self.height = width, height
        self.parts = [f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>']

    def add(self, s: str):
        self.parts.append(s)

    def render(self, data: pd.DataFrame) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">')
        return "\n".join([head, _comment_table(data), '<rect width="100%" height="100%" fill="white"/>',
                          *self.parts, "</svg>"]) + "\n"


class _Axes:
    """Linear mapping of one plot rectangle; y may have a secondary scale."""

    def __init__(self, svg: _Svg, x0, y0, x1, y1, ylim, ylim2=None):
        self.svg = svg
        self.x0, self.y0, self.x1, self.y1 = x0, y0, x1, y1
        self.ylim, self.ylim2 = ylim, ylim2
        self.n = 1

    def set_n(self, n: int):
        self.n = max(n, 1)

    def px(self, i) -> float:
        return self.x0 + (self.x1 - self.x0) * (i / max(self.n - 1, 1))

    def py(self, v, secondary=False) -> float:
        lo, hi = self.ylim2 if secondary else self.ylim
        return self.y1 - (self.y1 - self.y0) * ((v - lo) / (hi - lo))

    def frame(self, ylabel: str, ylabel2: str | None = None, ticks: int = 5):
        s = self.svg
        s.add(f'<rect x="{self.x0:.1f}" y="{self.y0:.1f}" width="{self.x1 - self.x0:.1f}" '
              f'height="{self.y1 - self.y0:.1f}" fill="none" stroke="#444"/>')
        for k in range(ticks + 1):
            v = self.ylim[0] + (self.ylim[1] - self.ylim[0]) * k / ticks
            y = self.py(v)
            s.add(f'<line x1="{self.x0:.1f}" y1="{y:.1f}" x2="{self.x1:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
            s.add(f'<text x="{self.x0 - 6:.1f}" y="{y + 4:.1f}" text-anchor="end">{v:.4g}</text>')
            if self.ylim2 is not None:
                v2 = self.ylim2[0] + (self.ylim2[1] - self.ylim2[0]) * k / ticks
                s.add(f'<text x="{self.x1 + 6:.1f}" y="{y + 4:.1f}">{v2:.4g}</text>')
        mid = (self.y0 + self.y1) / 2
        s.add(f'<text transform="translate({self.x0 - 50:.1f},{mid:.1f}) rotate(-90)" '
              f'text-anchor="middle">{escape(ylabel)}</text>')
        if ylabel2:
            s.add(f'<text transform="translate({self.x1 + 55:.1f},{mid:.1f}) rotate(90)" '
                  f'text-anchor="middle">{escape(ylabel2)}</text>')

    def date_ticks(self, dates, every: int = 10):
        for i in range(0, len(dates), every):
            x = self.px(i)
            self.svg.add(f'<text x="{x:.1f}" y="{self.y1 + 16:.1f}" text-anchor="middle">{escape(str(dates[i])[5:])}</text>')

    def line(self, values, color, secondary=False, dash=None, width=1.5):
        pts, runs = [], []
        for i, v in enumerate(values):
            if v is None or not np.isfinite(v):
                if pts:
                    runs.append(pts)
                pts = []
                continue
            pts.append(f"{self.px(i):.1f},{self.py(v, secondary):.1f}")
        if pts:
            runs.append(pts)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        for run in runs:
            self.svg.add(f'<polyline points="{" ".join(run)}" fill="none" stroke="{color}" '
                         f'stroke-width="{width}"{extra}/>')

    def band(self, i0, i1, color, label):
        xa, xb = self.px(i0), self.px(i1)
        self.svg.add(f'<rect x="{xa:.1f}" y="{self.y0:.1f}" width="{max(xb - xa, 1.0):.1f}" '
                     f'height="{self.y1 - self.y0:.1f}" fill="{color}" fill-opacity="0.18"/>')
        self.svg.add(f'<text x="{(xa + xb) / 2:.1f}" y="{self.y0 + 14:.1f}" text-anchor="middle">{escape(label)}</text>')


def _legend(svg: _Svg, items, x, y):
    for k, (label, color) in enumerate(items):
        yy = y + 14 * k
        svg.add(f'<line x1="{x}" y1="{yy}" x2="{x + 18}" y2="{yy}" stroke="{color}" stroke-width="2"/>')
        svg.add(f'<text x="{x + 24}" y="{yy + 4}">{escape(label)}</text>')


def _limits(*arrays, pad=0.05, floor=None):
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if len(vals) == 0:
        return (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    if floor is not None:
        lo = min(lo, floor)
    if hi - lo < 1e-9:
        hi = lo + 1.0
    span = hi - lo
    return (lo - pad * span if floor is None else lo, hi + pad * span)


def _series(frame: pd.DataFrame, level: str, geo_id: str) -> pd.DataFrame:
    return frame.loc[(frame["level"] == level) & (frame["geo_id"] == geo_id)].sort_values("date")


def figure1_table(metrics: pd.DataFrame, sdi: pd.DataFrame, benchmark: pd.DataFrame,
                  level: str = "nation", geo_id: str = NATION_ID) -> pd.DataFrame:
    """Daily SDI and metrics; trip-like metrics relative to their benchmark."""
    m = _series(metrics, level, geo_id)
    s = _series(sdi, level, geo_id)[["date", "sdi", "sdi_smoothed"]]
    b = benchmark.loc[(benchmark["level"] == level) & (benchmark["geo_id"] == geo_id)]
    if b.empty:
        raise ValueError(f"no benchmark row for {level}:{geo_id}")
    b = b.iloc[0]
    out = s.merge(m, on="date", how="inner")
    rel = {}
    for col, name in (("work_trips_pp", "work_trips_rel"), ("nonwork_trips_pp", "nonwork_trips_rel"),
                      ("miles_pp", "miles_rel"), ("pct_out_of_county", "out_of_county_rel")):
        base = float(b[col])
        rel[name] = out[col] / base if base > 0 else np.nan
    return pd.DataFrame({"date": out["date"], "sdi": out["sdi"], "sdi_smoothed": out["sdi_smoothed"],
                         "pct_staying_home": out["pct_staying_home"], **rel})[FIG1_COLUMNS].reset_index(drop=True)


def figure1_svg(table: pd.DataFrame, title: str = "Mobility metrics and social distancing index") -> str:
    svg = _Svg(title)
    top, right, bottom, left = MARGIN
    split = top + (HEIGHT - top - bottom) * 0.45
    dates = table["date"].tolist()
    ax1 = _Axes(svg, left, top, WIDTH - right - 150, split - 20, (0.0, 100.0))
    ax1.set_n(len(dates))
    ax1.frame("SDI")
    ax1.line(table["sdi"], PALETTE[7], dash="3,3", width=1.0)
    ax1.line(table["sdi_smoothed"], PALETTE[1], width=2.0)
    rel_cols = ["pct_staying_home", "work_trips_rel", "nonwork_trips_rel", "miles_rel", "out_of_county_rel"]
    ax2 = _Axes(svg, left, split + 10, WIDTH - right - 150, HEIGHT - bottom, _limits(*(table[c] for c in rel_cols), floor=0.0))
    ax2.set_n(len(dates))
    ax2.frame("share / ratio to benchmark")
    ax2.date_ticks(dates)
    for k, c in enumerate(rel_cols):
        ax2.line(table[c], PALETTE[k])
    _legend(svg, [("SDI", PALETTE[7]), ("SDI 5-day mean", PALETTE[1])], WIDTH - right - 130, top + 10)
    _legend(svg, [("staying home", PALETTE[0]), ("work trips", PALETTE[1]), ("non-work trips", PALETTE[2]),
                  ("miles", PALETTE[3]), ("out of county", PALETTE[4])], WIDTH - right - 130, int(split) + 20)
    return svg.render(table)


def _phase_labels(dates, report) -> list[str]:
    labels = []
    for d in dates:
        d = str(d)
        lab = ""
        if report.get("inertia_start") and d >= report["inertia_start"]:
            lab = "inertia"
        if report.get("fatigue_start") and d >= report["fatigue_start"]:
            lab = "fatigue" if not report.get("fatigue_end") or d <= report["fatigue_end"] else ""
        labels.append(lab)
    return labels


def figure2_table(sdi: pd.DataFrame, roc: pd.DataFrame, report: dict,
                  level: str = "nation", geo_id: str = NATION_ID) -> pd.DataFrame:
    s = _series(sdi, level, geo_id)[["date", "sdi_smoothed"]]
    r = _series(roc, level, geo_id)[["date", "roc"]]
    out = s.merge(r, on="date", how="left")
    out["phase"] = _phase_labels(out["date"], report)
    return out[FIG2_COLUMNS].reset_index(drop=True)


def figure2_svg(table: pd.DataFrame, title: str = "SDI and rate of change") -> str:
    svg = _Svg(title)
    top, right, bottom, left = MARGIN
    dates = table["date"].tolist()
    roc_lim = _limits(table["roc"], floor=None)
    roc_lim = (min(roc_lim[0], -1.0), max(roc_lim[1], 1.0))
    ax = _Axes(svg, left, top, WIDTH - right, HEIGHT - bottom, (0.0, 100.0), roc_lim)
    ax.set_n(len(dates))
    phases = table["phase"].tolist()
    for name, color in (("inertia", "#2ca02c"), ("fatigue", "#d62728")):
        idx = [i for i, p in enumerate(phases) if p == name]
        if idx:
            ax.band(idx[0], idx[-1], color, name)
    ax.frame("SDI (5-day mean)", "ROC (%)")
    ax.date_ticks(dates)
    y0 = ax.py(0.0, secondary=True)
    svg.add(f'<line x1="{ax.x0:.1f}" y1="{y0:.1f}" x2="{ax.x1:.1f}" y2="{y0:.1f}" stroke="#888" stroke-dasharray="4,3"/>')
    ax.line(table["sdi_smoothed"], PALETTE[0], width=2.0)
    ax.line(table["roc"], PALETTE[3], secondary=True)
    _legend(svg, [("SDI", PALETTE[0]), ("ROC", PALETTE[3])], left + 10, top + 24)
    return svg.render(table)


def figure3_from_phases(phases: pd.DataFrame, level: str = "state") -> pd.DataFrame:
    """Before/after SDI per geography from the phase table (no case columns)."""
    p = phases.loc[phases["level"] == level].sort_values("geo_id")
    return pd.DataFrame({"geo_id": p["geo_id"], "sdi_before": p["mean_before"], "sdi_after": p["mean_after"],
                         "sdi_pct_change": p["pct_change"], "cases_before_per_k": np.nan,
                         "cases_after_per_k": np.nan})[FIG3_COLUMNS].reset_index(drop=True)


def figure3_svg(table: pd.DataFrame, title: str = "Week before and after the pivot date") -> str:
    svg = _Svg(title)
    top, right, bottom, left = MARGIN
    n = len(table)
    sdi_lim = (0.0, max(_limits(table["sdi_before"], table["sdi_after"], floor=0.0)[1], 1.0))
    cases = table[["cases_before_per_k", "cases_after_per_k"]].to_numpy(dtype=float)
    has_cases = bool(np.isfinite(cases).any())
    case_lim = (0.0, max(_limits(cases, floor=0.0)[1], 1e-6)) if has_cases else None
    ax = _Axes(svg, left, top, WIDTH - right, HEIGHT - bottom, sdi_lim, case_lim)
    ax.frame("mean SDI", "new cases per 1000" if has_cases else None)
    slot = (ax.x1 - ax.x0) / max(n, 1)
    bw = slot * 0.35
    centers = []
    for i, row in enumerate(table.itertuples(index=False)):
        cx = ax.x0 + slot * (i + 0.5)
        centers.append(cx)
        for k, (v, color) in enumerate(((row.sdi_before, PALETTE[1]), (row.sdi_after, PALETTE[0]))):
            if v is None or not np.isfinite(v):
                continue
            x = cx - bw + k * bw
            y = ax.py(v)
            svg.add(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bw:.1f}" height="{ax.y1 - y:.1f}" fill="{color}" '
                    f'fill-opacity="0.7"/>')
        svg.add(f'<text x="{cx:.1f}" y="{ax.y1 + 16:.1f}" text-anchor="middle">{escape(str(row.geo_id))}</text>')
    if has_cases:
        for col, color in (("cases_before_per_k", PALETTE[3]), ("cases_after_per_k", PALETTE[2])):
            pts = [f"{cx:.1f},{ax.py(v, True):.1f}" for cx, v in zip(centers, table[col]) if np.isfinite(v)]
            if pts:
                svg.add(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="2"/>')
    items = [("SDI week before", PALETTE[1]), ("SDI week after", PALETTE[0])]
    if has_cases:
        items += [("cases before", PALETTE[3]), ("cases after", PALETTE[2])]
    _legend(svg, items, WIDTH - right - 140, top + 12)
    return svg.render(table)
