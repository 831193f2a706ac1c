"""Social Distancing Index and smoothing.

Each metric becomes a reduction score in [0, 1] relative to its benchmark:

* staying home: ``(m - b) / (1 - b)`` (1 when ``b == 1``);
* work trips, non-work trips, miles, out-of-county share: ``1 - m / b``.

The index is ``100 * sum(w_i * r_i)`` with every ``r_i`` clamped to [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import astuple, dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_columns, check_odd_window, check_series
from .metrics import compute_benchmark, default_benchmark_dates

logger = logging.getLogger(__name__)

SDI_COLUMNS = ["date", "level", "geo_id", "sdi", "sdi_smoothed"]
_TRIP_LIKE = ["work_trips_pp", "nonwork_trips_pp", "miles_pp", "pct_out_of_county"]


@dataclass(frozen=True)
class SdiWeights:
    w_home: float = 0.4
    w_work: float = 0.1
    w_nonwork: float = 0.2
    w_dist: float = 0.2
    w_outcounty: float = 0.1

    def __post_init__(self):
        vals = astuple(self)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError("SDI weights must be finite and non-negative")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ValueError(f"SDI weights must sum to 1, got {sum(vals)!r}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


def components(m_home, m_trip, b_home, b_trip):
    """Clamped component scores; returns ``(scores, flagged)``.

    ``m_trip``/``b_trip`` stack the four trip-like metrics on the last axis
    in the order work, non-work, miles, out-of-county. A zero trip-like
    benchmark pins its component to 0; ``flagged`` marks the cases where the
    current value is positive.
    """
    m_home = np.asarray(m_home, dtype=float)
    b_home = np.asarray(b_home, dtype=float)
    m_trip = np.asarray(m_trip, dtype=float)
    b_trip = np.asarray(b_trip, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        home = np.where(b_home < 1.0, (m_home - b_home) / (1.0 - b_home), 1.0)
        trip = np.where(b_trip > 0, 1.0 - m_trip / b_trip, 0.0)
    flagged = (b_trip <= 0) & (m_trip > 0)
    scores = np.concatenate([np.clip(home, 0.0, 1.0)[..., None], np.clip(trip, 0.0, 1.0)], axis=-1)
    return scores, flagged


def _fold(scores: np.ndarray, w: SdiWeights) -> np.ndarray:
    # dividing by the same dot product of ones makes all-ones scores exactly 100
    wa = w.as_array()
    return 100.0 * (scores @ wa) / (np.ones(len(wa)) @ wa)


def sdi_score(m, b, w: SdiWeights | None = None) -> float:
    """SDI in [0, 100] of one metrics record against its benchmark.

    ``m`` and ``b`` are mappings (or rows) holding ``pct_staying_home``,
    ``work_trips_pp``, ``nonwork_trips_pp``, ``miles_pp`` and
    ``pct_out_of_county``.
    """
    w = w or SdiWeights()
    scores, flagged = components(m["pct_staying_home"], [m[k] for k in _TRIP_LIKE],
                                 b["pct_staying_home"], [b[k] for k in _TRIP_LIKE])
    if flagged.any():
        logger.warning("zero trip-like benchmark with positive current value; component pinned to 0")
    return float(_fold(scores, w))


def moving_average(values, window: int = 5, centered: bool = True) -> np.ndarray:
    """Truncated-window moving average over consecutive observations.

    Centered windows are cut at the series edges to the observations that
    exist; trailing windows use up to ``window`` values ending at the
    current one.
    """
    check_odd_window(window)
    x, _ = check_series(values)
    n = len(x)
    if n == 0:
        return x.copy()
    idx = np.arange(n)
    if centered:
        h = window // 2
        lo = np.maximum(idx - h, 0)
        hi = np.minimum(idx + h, n - 1)
    else:
        lo = np.maximum(idx - window + 1, 0)
        hi = idx
    out = np.empty(n)
    # direct sums keep the result exact for integer-valued data
    for i in range(n):
        out[i] = np.sum(x[lo[i]:hi[i] + 1]) / (hi[i] - lo[i] + 1)
    return out


def sdi_frame(metrics: pd.DataFrame, benchmark: pd.DataFrame, w: SdiWeights | None = None,
              window: int = 5, centered: bool = True) -> pd.DataFrame:
    """SDI series for every geography in ``metrics`` (columns :data:`SDI_COLUMNS`)."""
    w = w or SdiWeights()
    check_columns(metrics, ["date", "level", "geo_id", "pct_staying_home"] + _TRIP_LIKE, "metrics")
    m = metrics.merge(benchmark, on=["level", "geo_id"], suffixes=("", "_b"), how="inner")
    dropped = len(metrics) - len(m)
    if dropped:
        logger.warning("sdi: %d metric rows without a benchmark skipped", dropped)
    scores, flagged = components(m["pct_staying_home"].to_numpy(), m[_TRIP_LIKE].to_numpy(),
                                 m["pct_staying_home_b"].to_numpy(), m[[k + "_b" for k in _TRIP_LIKE]].to_numpy())
    if flagged.any():
        logger.warning("sdi: %d components pinned to 0 (zero benchmark)", int(flagged.sum()))
    out = pd.DataFrame({
        "date": m["date"].to_numpy(),
        "level": m["level"].to_numpy(),
        "geo_id": m["geo_id"].to_numpy(),
        "sdi": _fold(scores, w),
    })
    out = out.sort_values(["level", "geo_id", "date"], kind="stable").reset_index(drop=True)
    smoothed = np.empty(len(out))
    for _, idx in out.groupby(["level", "geo_id"], sort=False).indices.items():
        smoothed[idx] = moving_average(out["sdi"].to_numpy()[idx], window, centered)
    out["sdi_smoothed"] = smoothed
    return out


def write_sdi(sdi: pd.DataFrame, path) -> None:
    sdi[SDI_COLUMNS].to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


def read_sdi(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"date": str, "level": str, "geo_id": str})
    check_columns(df, SDI_COLUMNS, "sdi")
    return df


class MovingAverage(TransformerMixin, BaseEstimator):
    """Stateless smoother; ``transform`` applies :func:`moving_average`."""

    def __init__(self, window=5, centered=True):
        self.window = window
        self.centered = centered

    def fit(self, X, y=None):
        check_odd_window(self.window)
        return self

    def transform(self, X):
        return moving_average(X, self.window, self.centered)


class SocialDistancingIndex(TransformerMixin, BaseEstimator):
    """``fit(metrics, benchmark_dates=...)`` learns benchmarks; ``transform(metrics)`` returns SDI rows."""

    def __init__(self, weights=None, window=5, centered=True):
        self.weights = weights
        self.window = window
        self.centered = centered

    def _weights(self) -> SdiWeights:
        w = self.weights
        if w is None:
            return SdiWeights()
        if isinstance(w, SdiWeights):
            return w
        if isinstance(w, dict):
            return SdiWeights(**w)
        return SdiWeights(*w)

    def fit(self, X, y=None, benchmark_dates=None):
        if benchmark_dates is None:
            benchmark_dates = default_benchmark_dates(int(str(X["date"].min())[:4]))
        self.benchmark_ = compute_benchmark(X, benchmark_dates)
        self.weights_ = self._weights()
        return self

    def transform(self, X):
        return sdi_frame(X, self.benchmark_, self.weights_, self.window, self.centered)
