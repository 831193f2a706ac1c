"""Pipeline configuration and the in-memory stage functions the CLI chains.

Every stage is a plain function of frames; the CLI only adds file I/O
around them, so running stages one by one and running them chained give
the same results.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .activity import ActivityProfiler, ClusterConfig, HomeWorkConfig
from .cases import CaseTable, figure3_table, join_with_sdi
from .geo import ZoneIndex
from .ingest import CleaningConfig, CleaningReport, clean
from .metrics import NATION_ID, compute_metrics, default_benchmark_dates, panel_days, trip_dates
from .phase import PhaseReport, phase_report, roc
from .sdi import SdiWeights, sdi_frame
from .metrics import compute_benchmark
from .trips import STATIC, TripConfig, assign_zones, filter_short, in_trip_mask, segment
from .weights import calibration_dates, county_device_weights, state_trip_weights

logger = logging.getLogger(__name__)

CONFIG_ENV = "MOBILITY_SDI_CONFIG"


@dataclass
class PipelineConfig:
    """Every tunable of a run, with defaults.

    Paths left as None fall back to the synth outputs in ``synth_dir`` (or
    ``output_dir/synth``). ``target_rates`` is a number, a ``{state: rate}``
    map or the path of a JSON map. Date lists left as None default to the
    weekdays of Feb 3-14 (benchmark) and Feb 1-14 (trip-rate calibration)
    of the data's year.
    """

    output_dir: str = "out"
    zones: str | None = None
    sightings: str | None = None
    cases: str | None = None
    scenario: str | None = None
    synth_dir: str | None = None
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    trips: TripConfig = field(default_factory=TripConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    home_work: HomeWorkConfig = field(default_factory=HomeWorkConfig)
    sdi_weights: SdiWeights = field(default_factory=SdiWeights)
    benchmark_dates: list[str] | None = None
    calibration_dates: list[str] | None = None
    target_rates: float | dict | str | None = None
    smoothing_window: int = 5
    smoothing_centered: bool = True
    roc_lookback: int = 5
    roc_eps: float = 1.0
    fatigue_min_days: int = 3
    phase_window_start: str | None = "2020-03-13"
    pivot_date: str | None = None
    compare_smoothed: bool = False
    jobs: int = 1

    _SECTIONS = {"cleaning": CleaningConfig, "trips": TripConfig, "clustering": ClusterConfig,
                 "home_work": HomeWorkConfig, "sdi_weights": SdiWeights}

    def __post_init__(self):
        for name, cls in self._SECTIONS.items():
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, cls(**v))
            elif not isinstance(v, cls):
                raise ValueError(f"config section {name!r} must be an object")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be a positive odd integer")
        if self.roc_lookback < 1 or self.fatigue_min_days < 1:
            raise ValueError("roc_lookback and fatigue_min_days must be >= 1")
        if not self.roc_eps > 0:
            raise ValueError("roc_eps must be > 0")
        if self.jobs == 0:
            raise ValueError("jobs must be non-zero")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        if base_dir is not None:
            for key in ("output_dir", "zones", "sightings", "cases", "scenario", "synth_dir"):
                v = getattr(cfg, key)
                if v is not None and not os.path.isabs(v):
                    setattr(cfg, key, str(Path(base_dir) / v))
            if isinstance(cfg.target_rates, str) and not os.path.isabs(cfg.target_rates):
                cfg.target_rates = str(Path(base_dir) / cfg.target_rates)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(data, Path(path).parent)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in self._SECTIONS:
            d[name] = asdict(d[name])
        return d

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # resolved paths ----------------------------------------------------------

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def synth_path(self) -> Path:
        return Path(self.synth_dir) if self.synth_dir else self.out / "synth"

    def input_path(self, name: str) -> Path:
        """Configured input file, else the synth output of that name."""
        explicit = {"zones": self.zones, "sightings": self.sightings, "cases": self.cases}[name]
        return Path(explicit) if explicit else self.synth_path / f"{name}.{'json' if name == 'zones' else 'csv'}"

    def resolved_target_rates(self):
        t = self.target_rates
        if t is None:
            default = self.synth_path / "target_rates.json"
            if self.zones is None and default.exists():
                t = str(default)
            else:
                return 4.0
        if isinstance(t, str):
            with open(t, encoding="utf-8") as fh:
                t = json.load(fh)
        if isinstance(t, dict):
            return {str(k): float(v) for k, v in t.items()}
        return float(t)


# -- stages -------------------------------------------------------------------

def run_ingest(sightings: pd.DataFrame, cfg: PipelineConfig) -> tuple[pd.DataFrame, CleaningReport]:
    return clean(sightings, cfg.cleaning)


def run_trips(cleaned: pd.DataFrame, zones: ZoneIndex, cfg: PipelineConfig) -> tuple[pd.DataFrame, int]:
    """Trips that pass the length filter, with zones; also the count of short trips removed."""
    raw, _ = segment(cleaned, cfg.trips, n_jobs=cfg.jobs)
    kept = filter_short(raw, cfg.trips.min_trip_length_m)
    return assign_zones(kept, zones), len(raw) - len(kept)


def labeled_points(cleaned: pd.DataFrame, trips: pd.DataFrame) -> pd.DataFrame:
    """Cleaned points with ``trip_id`` ``"1"`` inside a kept trip, else ``"0"``.

    Points of trips dropped by the length filter count as static.
    """
    mask = in_trip_mask(cleaned, trips)
    return cleaned.assign(trip_id=np.where(mask, "1", STATIC))


def run_activities(cleaned: pd.DataFrame, trips: pd.DataFrame, zones: ZoneIndex, cfg: PipelineConfig):
    """Profiles, excluded devices (device -> reason) and the activity clusters per device."""
    c, h = cfg.clustering, cfg.home_work
    prof = ActivityProfiler(c.eps_m, c.min_points, c.max_radius_m, c.merge_eps_m, c.static_speed_cap_mps,
                            h.night_start_h, h.night_end_h, h.min_night_weight, h.work_min_dwell_s,
                            h.work_min_day_frac, n_jobs=cfg.jobs)
    prof.fit(labeled_points(cleaned, trips), zones=zones)
    return prof.profiles_, dict(sorted(prof.excluded_.items())), prof.clusters_


def _data_year(frame: pd.DataFrame, col: str = "date") -> int:
    return int(str(frame[col].min())[:4])


def run_weights(cleaned: pd.DataFrame, trips: pd.DataFrame, profiles: pd.DataFrame, zones: ZoneIndex,
                cfg: PipelineConfig):
    """Device weights, per-state trip factors and a summary dict."""
    county_w, dw, excluded = county_device_weights(profiles, zones)
    panel = panel_days(cleaned, dw, zones)
    dated = trip_dates(trips, dw, zones)
    dates = cfg.calibration_dates or calibration_dates(_data_year(panel))
    factors = state_trip_weights(dated, dw, cfg.resolved_target_rates(), dates, panel)
    info = {
        "county_weights": county_w,
        "excluded_counties": excluded,
        "trip_factors": dict(sorted(factors.items())),
        "calibration_dates": list(dates),
    }
    return dw, factors, info


def run_metrics(cleaned: pd.DataFrame, trips: pd.DataFrame, profiles: pd.DataFrame, device_weights: pd.DataFrame,
                factors: dict, zones: ZoneIndex, cfg: PipelineConfig) -> pd.DataFrame:
    panel = panel_days(cleaned, device_weights, zones)
    dated = trip_dates(trips, device_weights, zones)
    return compute_metrics(dated, profiles, device_weights, factors, zones, panel=panel)


def run_sdi(metrics: pd.DataFrame, cfg: PipelineConfig) -> tuple[pd.DataFrame, pd.DataFrame]:
    dates = cfg.benchmark_dates or default_benchmark_dates(_data_year(metrics))
    bench = compute_benchmark(metrics, dates)
    return sdi_frame(metrics, bench, cfg.sdi_weights, cfg.smoothing_window, cfg.smoothing_centered), bench


def run_phases(sdi: pd.DataFrame, cfg: PipelineConfig) -> tuple[list[PhaseReport], pd.DataFrame]:
    """Phase report per geography (nation first) and the long ROC frame."""
    if len(sdi) == 0:
        raise ValueError("SDI series is empty")
    reports, rocs = [], []
    lvl_rank = {"nation": 0, "state": 1, "county": 2}
    keys = sorted({(lvl, g) for lvl, g in zip(sdi["level"], sdi["geo_id"])}, key=lambda k: (lvl_rank[k[0]], k[1]))
    for lvl, geo in keys:
        g = sdi.loc[(sdi["level"] == lvl) & (sdi["geo_id"] == geo)].sort_values("date")
        dates = g["date"].to_numpy()
        smooth = g["sdi_smoothed"].to_numpy(dtype=float)
        cmp_vals = smooth if cfg.compare_smoothed else g["sdi"].to_numpy(dtype=float)
        rep = phase_report(smooth, dates, cfg.pivot_date, geo_id=geo, n=cfg.roc_lookback, eps=cfg.roc_eps,
                           k=cfg.fatigue_min_days, window_start=cfg.phase_window_start, compare_values=cmp_vals)
        reports.append((lvl, rep))
        rocs.append(pd.DataFrame({"date": dates, "level": lvl, "geo_id": geo, "roc": roc(smooth, cfg.roc_lookback)}))
    return reports, pd.concat(rocs, ignore_index=True)


PHASE_COLUMNS = ["level", "geo_id", "roc_peak_date", "inertia_start", "fatigue_start", "fatigue_end",
                 "mean_before", "mean_after", "pct_change", "t_stat", "p_value"]


def phases_frame(reports) -> pd.DataFrame:
    rows = [{"level": lvl, **rep.to_dict()} for lvl, rep in reports]
    return pd.DataFrame(rows, columns=PHASE_COLUMNS)


def national_report(reports) -> PhaseReport | None:
    for lvl, rep in reports:
        if lvl == "nation" and rep.geo_id == NATION_ID:
            return rep
    return None


def run_cases(cases: CaseTable, sdi: pd.DataFrame, zones: ZoneIndex, pivot_date, cfg: PipelineConfig):
    """Joined case/SDI rows and the before/after table per state at ``pivot_date``."""
    joined = join_with_sdi(cases, sdi, zones)
    fig3 = figure3_table(joined, pivot_date, level="state") if pivot_date else pd.DataFrame()
    return joined, fig3


@dataclass
class PipelineResult:
    cleaned: pd.DataFrame
    cleaning_report: CleaningReport
    trips: pd.DataFrame
    n_short_removed: int
    profiles: pd.DataFrame
    excluded_devices: dict
    device_weights: pd.DataFrame
    trip_factors: dict
    weights_info: dict
    metrics: pd.DataFrame
    sdi: pd.DataFrame
    benchmark: pd.DataFrame
    phase_reports: list
    roc: pd.DataFrame
    clusters: dict = field(default_factory=dict)
    joined: pd.DataFrame | None = None
    figure3: pd.DataFrame | None = None

    @property
    def national(self) -> PhaseReport | None:
        return national_report(self.phase_reports)


def run_pipeline(sightings: pd.DataFrame, zones: ZoneIndex, cfg: PipelineConfig | None = None,
                 cases: CaseTable | None = None) -> PipelineResult:
    """All stages in memory."""
    cfg = cfg or PipelineConfig()
    cleaned, report = run_ingest(sightings, cfg)
    trips, n_short = run_trips(cleaned, zones, cfg)
    profiles, excluded, clusters = run_activities(cleaned, trips, zones, cfg)
    dw, factors, info = run_weights(cleaned, trips, profiles, zones, cfg)
    metrics = run_metrics(cleaned, trips, profiles, dw, factors, zones, cfg)
    sdi, bench = run_sdi(metrics, cfg)
    reports, roc_frame = run_phases(sdi, cfg)
    res = PipelineResult(cleaned, report, trips, n_short, profiles, excluded, dw, factors, info, metrics, sdi,
                         bench, reports, roc_frame, clusters)
    if cases is not None:
        nat = national_report(reports)
        pivot = cfg.pivot_date or (nat.fatigue_start if nat else None)
        res.joined, res.figure3 = run_cases(cases, sdi, zones, pivot, cfg)
    return res
