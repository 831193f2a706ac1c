"""Rate-of-change oscillator, inertia/fatigue detection and the before/after test."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._special import t_cdf
from ._validation import check_series

logger = logging.getLogger(__name__)


@dataclass
class PhaseReport:
    geo_id: str = ""
    roc_peak_date: str | None = None
    inertia_start: str | None = None
    fatigue_start: str | None = None
    fatigue_end: str | None = None
    mean_before: float | None = None
    mean_after: float | None = None
    pct_change: float | None = None
    t_stat: float | None = None
    p_value: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("Infinity" if v > 0 else "-Infinity")
            return v

        return json.dumps({k: clean(v) for k, v in asdict(self).items()}, indent=1, sort_keys=False)


def roc(values, n: int = 5) -> np.ndarray:
    """Percent change over ``n`` observations; NaN where undefined.

    The first ``n`` entries have no lookback value, and entries whose
    lookback value is 0 are undefined (logged).
    """
    if n < 1:
        raise ValueError("lookback n must be >= 1")
    s, _ = check_series(values)
    out = np.full(len(s), np.nan)
    if len(s) <= n:
        return out
    prev = s[:-n]
    cur = s[n:]
    zero = prev == 0
    if zero.any():
        logger.warning("roc undefined at %d dates (zero lookback value)", int(zero.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        out[n:] = np.where(zero, np.nan, 100.0 * (cur - prev) / prev)
    return out


def detect_phases(roc_values, dates=None, eps: float = 1.0, k: int = 3) -> PhaseReport:
    """Peak, inertia onset and fatigue onset of an ROC series.

    Undefined (NaN) entries are skipped. Dates default to positional
    indices rendered as strings; fields without a matching pattern stay
    None.
    """
    r, dates = check_series(roc_values, dates)
    if dates is None:
        dates = np.array([str(i) for i in range(len(r))], dtype=object)
    valid = np.flatnonzero(np.isfinite(r))
    rep = PhaseReport()
    if len(valid) == 0:
        return rep
    rv = r[valid]
    dv = [str(d) for d in np.asarray(dates)[valid]]
    peak = int(np.argmax(rv))
    rep.roc_peak_date = dv[peak]
    calm = np.flatnonzero(np.abs(rv[peak + 1:]) < eps)
    if len(calm) == 0:
        return rep
    inertia = peak + 1 + int(calm[0])
    rep.inertia_start = dv[inertia]
    neg = rv < 0
    i = inertia
    while i < len(rv):
        if neg[i]:
            j = i
            while j < len(rv) and neg[j]:
                j += 1
            if j - i >= k:
                rep.fatigue_start = dv[i]
                rep.fatigue_end = dv[j - 1]
                return rep
            i = j
        else:
            i += 1
    return rep


def week_compare(values, dates, pivot_date, n_days: int = 5):
    """Means, change and variances of the ``n_days`` observations before and from the pivot.

    Returns ``(mean_before, mean_after, pct_change, var_before, var_after)``
    with sample variances (ddof=1). ``dates`` must be ISO strings in
    increasing order; the pivot itself opens the "after" week.
    """
    before, after = split_weeks(values, dates, pivot_date, n_days)
    mb, ma = float(np.mean(before)), float(np.mean(after))
    pct = 100.0 * (ma - mb) / mb if mb != 0 else math.nan
    return mb, ma, pct, float(np.var(before, ddof=1)), float(np.var(after, ddof=1))


def split_weeks(values, dates, pivot_date, n_days: int = 5) -> tuple[np.ndarray, np.ndarray]:
    x, d = check_series(values, dates)
    if d is None:
        raise ValueError("week_compare needs dates")
    d = np.asarray([str(v) for v in d])
    pivot = str(pivot_date)
    if np.any(d[1:] <= d[:-1]):
        raise ValueError("dates must be strictly increasing")
    cut = int(np.searchsorted(d, pivot, side="left"))
    if cut < n_days or len(d) - cut < n_days:
        raise ValueError(f"need {n_days} observations on each side of {pivot}, "
                         f"have {cut} before and {len(d) - cut} from it")
    return x[cut - n_days:cut], x[cut:cut + n_days]


def welch_t_test(before, after) -> tuple[float, float]:
    """Welch t statistic and one-sided p-value for "after < before".

    ``t = (mean(after) - mean(before)) / se`` with the Welch-Satterthwaite
    degrees of freedom; ``p = P(T <= t)``.
    """
    a = np.asarray(before, dtype=float)
    b = np.asarray(after, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    va = float(np.var(a, ddof=1)) / len(a)
    vb = float(np.var(b, ddof=1)) / len(b)
    diff = float(np.mean(b) - np.mean(a))
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 0.5
        return (-math.inf, 0.0) if diff < 0 else (math.inf, 1.0)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t, t_cdf(t, df)


def phase_report(values, dates, pivot_date=None, geo_id: str = "", n: int = 5, eps: float = 1.0, k: int = 3,
                 window_start=None, compare_values=None) -> PhaseReport:
    """Full report for one geography.

    ``values`` is the smoothed SDI used for the oscillator; ``compare_values``
    (default ``values``) feeds the before/after comparison at ``pivot_date``,
    which defaults to the detected fatigue onset. Detection only considers
    dates on or after ``window_start``.
    """
    x, d = check_series(values, dates)
    d = np.asarray([str(v) for v in d])
    r = roc(x, n)
    sel = np.ones(len(d), dtype=bool) if window_start is None else d >= str(window_start)
    rep = detect_phases(r[sel], d[sel], eps, k)
    rep.geo_id = geo_id
    pivot = pivot_date if pivot_date is not None else rep.fatigue_start
    if pivot is not None:
        cmp_vals = x if compare_values is None else np.asarray(compare_values, dtype=float)
        try:
            mb, ma, pct, _, _ = week_compare(cmp_vals, d, pivot)
        except ValueError as exc:
            logger.warning("%s: no before/after comparison (%s)", geo_id, exc)
        else:
            before, after = split_weeks(cmp_vals, d, pivot)
            rep.mean_before, rep.mean_after, rep.pct_change = mb, ma, pct
            rep.t_stat, rep.p_value = welch_t_test(before, after)
    return rep


class RateOfChange(TransformerMixin, BaseEstimator):
    def __init__(self, n=5):
        self.n = n

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return roc(X, self.n)


class PhaseDetector(BaseEstimator):
    """``fit(sdi_smoothed, dates=...)`` sets ``roc_`` and ``report_``."""

    def __init__(self, n=5, eps=1.0, k=3, pivot_date=None, window_start=None):
        self.n = n
        self.eps = eps
        self.k = k
        self.pivot_date = pivot_date
        self.window_start = window_start

    def fit(self, X, y=None, dates=None, compare_values=None):
        x, dates = check_series(X, dates)
        if dates is None:
            raise ValueError("PhaseDetector.fit needs dates")
        self.roc_ = roc(x, self.n)
        self.report_ = phase_report(x, dates, self.pivot_date, n=self.n, eps=self.eps, k=self.k,
                                    window_start=self.window_start, compare_values=compare_values)
        return self


def reports_frame(reports: list[PhaseReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in reports])
