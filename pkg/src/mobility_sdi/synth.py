"""Seeded synthetic scenarios: sightings plus the ground truth behind them.

Behavior is scripted per phase as expected population metrics: share of
residents staying home, work and non-work trips per person, mean trip
length, and out-of-county trip share. Each weekday and county, the
generator turns those expectations into exact quotas (stay-home devices,
work tours, non-work tours, out-of-county tours, a distance budget) with
stochastic rounding, so day-to-day sampling noise stays small. All tours
are home based: home -> destination -> home.

Randomness is split into independent streams derived from the scenario
seed: one for the world setup, one per weekday for the quotas and one per
device for its sightings. Output does not depend on the number of jobs.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ._calendar import DAY_S, iso_to_day, to_date, weekdays
from .geo import EARTH_RADIUS_M, GeoPoint, Zone, ZoneIndex, haversine_distance, haversine_np, zone_from_dict, zone_to_dict
from .metrics import compute_metrics, trip_dates
from .trips import TRIP_COLUMNS, trip_id_for
from .weights import calibration_dates, county_device_weights, observed_trip_rates

_M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0
_STREAM_SETUP, _STREAM_DAY, _STREAM_DEVICE, _STREAM_CASES = 0, 1, 2, 3


@dataclass(frozen=True)
class Phase:
    """Scripted behavior from ``start`` on.

    The rates are population expectations (per resident per day, stay-home
    residents included). With ``transition_days = T > 1`` the values move
    linearly from the previous phase, reaching them on the ``T``-th weekday.
    """

    start: str
    stay_home_prob: float
    work_trip_rate: float
    nonwork_trip_rate: float
    mean_trip_km: float
    out_of_county_prob: float
    transition_days: int = 1

    def values(self) -> np.ndarray:
        return np.array([self.stay_home_prob, self.work_trip_rate, self.nonwork_trip_rate,
                         self.mean_trip_km, self.out_of_county_prob], dtype=float)


@dataclass(frozen=True)
class CaseCurve:
    """Logistic cumulative case curves, one per county."""

    start: str
    end: str
    attack_rate: float = 0.004
    midpoint: str = "2020-04-10"
    growth_per_day: float = 0.17
    midpoint_jitter_days: float = 6.0


@dataclass(frozen=True)
class Scenario:
    seed: int
    zones: tuple[Zone, ...]
    n_devices: int
    start_date: str
    end_date: str
    phases: tuple[Phase, ...]
    capture_prob: float = 1.0
    sighting_rate_hz: float = 1 / 450
    employment_rate: float = 0.85
    case_curve: CaseCurve | None = None
    fatigue_date: str | None = None
    name: str = "scenario"

    def __post_init__(self):
        self.validate()

    @property
    def dates(self) -> list[str]:
        return weekdays(self.start_date, self.end_date)

    def validate(self) -> None:
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if not self.zones:
            raise ValueError("scenario needs zones")
        for z in self.zones:
            if _ring_area(z.boundary) <= 0:
                raise ValueError(f"zone {z.zone_id} has zero area")
        if sum(z.population for z in self.zones) <= 0:
            raise ValueError("total population must be positive")
        dates = self.dates
        if not dates:
            raise ValueError("date range holds no weekdays")
        if not self.phases:
            raise ValueError("scenario needs at least one phase")
        starts = [p.start for p in self.phases]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("phase starts must be strictly increasing")
        if starts[0] > dates[0] or starts[-1] > dates[-1]:
            raise ValueError("phase starts must lie within the date range, the first on or before its start")
        for p in self.phases:
            if not (0 <= p.stay_home_prob <= 1 and 0 <= p.out_of_county_prob <= 1):
                raise ValueError(f"phase {p.start}: probabilities must be in [0, 1]")
            if min(p.work_trip_rate, p.nonwork_trip_rate, p.mean_trip_km) < 0:
                raise ValueError(f"phase {p.start}: rates must be >= 0")
            if p.transition_days < 1:
                raise ValueError(f"phase {p.start}: transition_days must be >= 1")
        if not (0 < self.capture_prob <= 1):
            raise ValueError("capture_prob must be in (0, 1]")
        if not (0 < self.sighting_rate_hz <= 1):
            raise ValueError("sighting_rate_hz must be in (0, 1]")
        if not (0 <= self.employment_rate <= 1):
            raise ValueError("employment_rate must be in [0, 1]")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "n_devices": self.n_devices,
            "date_range": [self.start_date, self.end_date],
            "capture_prob": self.capture_prob,
            "sighting_rate_hz": self.sighting_rate_hz,
            "employment_rate": self.employment_rate,
            "fatigue_date": self.fatigue_date,
            "phases": [asdict(p) for p in self.phases],
            "case_curve": asdict(self.case_curve) if self.case_curve else None,
            "zones": [zone_to_dict(z) for z in self.zones],
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if "date_range" in d:
            start, end = d["date_range"][0], d["date_range"][-1]
        else:
            start, end = d["start_date"], d["end_date"]
        return cls(
            seed=int(d["seed"]),
            zones=tuple(zone_from_dict(z) for z in d["zones"]),
            n_devices=int(d["n_devices"]),
            start_date=str(start),
            end_date=str(end),
            phases=tuple(Phase(**p) for p in d["phases"]),
            capture_prob=float(d.get("capture_prob", 1.0)),
            sighting_rate_hz=float(d.get("sighting_rate_hz", 1 / 450)),
            employment_rate=float(d.get("employment_rate", 0.85)),
            case_curve=CaseCurve(**d["case_curve"]) if d.get("case_curve") else None,
            fatigue_date=d.get("fatigue_date"),
            name=str(d.get("name", "scenario")),
        )


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


def dump_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario.to_dict(), fh, indent=1)
        fh.write("\n")


def paper_shape_scenario(**overrides) -> Scenario:
    """The shipped desk-scale scenario (2,000 devices, 8 zones in 4 states)."""
    text = resources.files("mobility_sdi").joinpath("data/paper_shape.json").read_text(encoding="utf-8")
    sc = Scenario.from_dict(json.loads(text))
    return replace(sc, **overrides) if overrides else sc


def grid_zones(rows: int = 2, cols: int = 4, origin=(38.0, -80.0), size_deg=(0.4, 0.5),
               populations=None, zones_per_state: int = 2, utc_offset_hours: float = 0.0) -> tuple[Zone, ...]:
    """Rectangular zones on a grid; each zone is its own county.

    Zones are numbered row by row; consecutive groups of
    ``zones_per_state`` share a state.
    """
    n = rows * cols
    pops = list(populations) if populations is not None else [200_000.0] * n
    if len(pops) != n:
        raise ValueError("need one population per zone")
    out = []
    for k in range(n):
        r, c = divmod(k, cols)
        lat0 = origin[0] + r * size_deg[0]
        lon0 = origin[1] + c * size_deg[1]
        ring = (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + size_deg[1]),
                GeoPoint(lat0 + size_deg[0], lon0 + size_deg[1]), GeoPoint(lat0 + size_deg[0], lon0))
        out.append(Zone(zone_id=f"Z{k + 1:02d}", county_id=f"C{k + 1:02d}",
                        state_id=f"S{k // zones_per_state + 1}", population=float(pops[k]),
                        boundary=ring, utc_offset_hours=utc_offset_hours))
    return tuple(out)


# -- helpers -------------------------------------------------------------------

def _ring_area(ring) -> float:
    xs = [p.lon for p in ring]
    ys = [p.lat for p in ring]
    return abs(sum(xs[i] * ys[i - 1] - xs[i - 1] * ys[i] for i in range(len(ring)))) / 2


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _py_rng(seed: int, *key: int) -> random.Random:
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, dtype=np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))


def _sround(x: float, rng: np.random.Generator) -> int:
    """Stochastic rounding with expectation ``x``."""
    lo = math.floor(x)
    return int(lo + (rng.random() < x - lo))


def _destinations(origins: np.ndarray, d_m: np.ndarray, bearings: np.ndarray):
    """Points ``d_m`` along ``bearings`` (rows) from each origin row ``(lat, lon)``."""
    lat1 = np.radians(origins[:, 0])[:, None]
    lon1 = np.radians(origins[:, 1])[:, None]
    ang = np.asarray(d_m, dtype=float) / EARTH_RADIUS_M
    if ang.ndim == 1:
        ang = ang[:, None]
    lat2 = np.arcsin(np.sin(lat1) * np.cos(ang) + np.cos(lat1) * np.sin(ang) * np.cos(bearings))
    lon2 = lon1 + np.arctan2(np.sin(bearings) * np.sin(ang) * np.cos(lat1),
                             np.cos(ang) - np.sin(lat1) * np.sin(lat2))
    return np.degrees(lat2), (np.degrees(lon2) + 540.0) % 360.0 - 180.0


def _dist(a, b) -> float:
    return haversine_distance(GeoPoint(*a), GeoPoint(*b))


class _World:
    def __init__(self, zones: tuple[Zone, ...]):
        self.index = ZoneIndex(zones)
        self.zone_ids = [z.zone_id for z in self.index]

    def zones_at(self, lat: np.ndarray, lon: np.ndarray, margin_m: float = 300.0) -> np.ndarray:
        """Zone per point when every point within ``margin_m`` shares it, else None."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        dlat = margin_m / _M_PER_DEG
        dlon = margin_m / (_M_PER_DEG * np.maximum(0.05, np.cos(np.radians(lat))))
        qlat = np.concatenate([lat, lat + dlat, lat - dlat, lat, lat])
        qlon = np.concatenate([lon, lon, lon, lon + dlon, lon - dlon])
        ok = (np.abs(qlat) <= 90) & (np.abs(qlon) <= 180)
        z = np.full(len(qlat), None, dtype=object)
        z[ok] = self.index.locate_many(qlat[ok], qlon[ok])
        z = z.reshape(5, -1)
        same = np.all(z == z[0], axis=0)
        out = z[0].copy()
        out[~same] = None
        return out

    def zone_at(self, p, margin_m: float = 300.0) -> str | None:
        return self.zones_at([p[0]], [p[1]], margin_m)[0]

    def random_point(self, zone: Zone, rng: np.random.Generator, tries: int = 50):
        lat0, lon0, lat1, lon1 = zone.bbox
        for _ in range(tries):
            lat = rng.uniform(lat0, lat1, 32)
            lon = rng.uniform(lon0, lon1, 32)
            hit = np.flatnonzero(self.zones_at(lat, lon) == zone.zone_id)
            if len(hit):
                return float(lat[hit[0]]), float(lon[hit[0]])
        raise ValueError(f"zone {zone.zone_id} is too small to place points in")

    def place(self, origins: np.ndarray, dists: np.ndarray, rng: np.random.Generator, want=None,
              avoid=(), grow: float = 1.0, tries: int = 20, n_bearings: int = 4, n_scales: int = 1):
        """Destinations about ``dists`` metres from each origin, in a suitable zone.

        A destination zone must equal ``want[i]`` (when given) and differ from
        every ``avoid`` array's entry ``i``. Each round tries ``n_bearings``
        bearings at ``n_scales`` distances ``d, d*grow, d*grow**2, ...`` and
        keeps the first hit in that order. Returns ``(lat, lon, zone)``
        arrays with None zones where nothing was found.
        """
        origins = np.asarray(origins, dtype=float).reshape(-1, 2)
        n = len(origins)
        lat_out = np.full(n, np.nan)
        lon_out = np.full(n, np.nan)
        zone_out = np.full(n, None, dtype=object)
        d = np.asarray(dists, dtype=float).copy()
        pending = np.arange(n)
        scales = grow ** np.arange(n_scales)
        for _ in range(tries):
            if len(pending) == 0:
                break
            m = len(pending)
            bearings = rng.uniform(0, 2 * math.pi, m)[:, None] + np.arange(n_bearings) * (2 * math.pi / n_bearings)
            bearings = np.tile(bearings, n_scales)
            dd = np.repeat(d[pending, None] * scales, n_bearings, axis=1)
            lat, lon = _destinations(origins[pending], dd, bearings)
            zs = self.zones_at(lat.ravel(), lon.ravel()).reshape(lat.shape)
            ok = zs != None  # noqa: E711 (elementwise)
            if want is not None:
                ok &= zs == np.asarray(want, dtype=object)[pending][:, None]
            for av in avoid:
                ok &= zs != np.asarray(av, dtype=object)[pending][:, None]
            has = ok.any(axis=1)
            first = np.argmax(ok, axis=1)
            rows = np.flatnonzero(has)
            idx = pending[rows]
            lat_out[idx] = lat[rows, first[rows]]
            lon_out[idx] = lon[rows, first[rows]]
            zone_out[idx] = zs[rows, first[rows]]
            pending = pending[~has]
            d[pending] *= grow ** n_scales
        return lat_out, lon_out, zone_out


# -- generation ----------------------------------------------------------------

@dataclass
class Device:
    device_id: str
    home: tuple[float, float]
    home_zone: str
    work: tuple[float, float] | None = None
    work_zone: str | None = None
    work_m: float = 0.0

    @property
    def employed(self) -> bool:
        return self.work is not None


@dataclass
class SynthOutput:
    scenario: Scenario
    sightings: pd.DataFrame
    truth_trips: pd.DataFrame
    truth_profiles: pd.DataFrame
    truth_metrics: pd.DataFrame
    target_rates: dict[str, float]
    cases: pd.DataFrame | None = None
    devices: list[Device] = field(default_factory=list)


def phase_values(scenario: Scenario) -> pd.DataFrame:
    """Effective scripted values per weekday (after transitions)."""
    dates = scenario.dates
    out = np.empty((len(dates), 5))
    prev = scenario.phases[0].values()
    active = -1
    base = prev
    j = 0
    for i, d in enumerate(dates):
        while active + 1 < len(scenario.phases) and scenario.phases[active + 1].start <= d:
            active += 1
            base = prev
            j = 0
        ph = scenario.phases[active]
        target = ph.values()
        frac = min(1.0, (j + 1) / ph.transition_days)
        cur = base + frac * (target - base)
        out[i] = cur
        prev = cur
        j += 1
    return pd.DataFrame(out, index=dates, columns=["stay_home_prob", "work_trip_rate", "nonwork_trip_rate",
                                                   "mean_trip_km", "out_of_county_prob"])


def _setup_devices(sc: Scenario, world: _World) -> list[Device]:
    rng = _stream(sc.seed, _STREAM_SETUP)
    zones = list(world.index)
    pops = np.array([z.population for z in zones], dtype=float)
    raw = pops / pops.sum() * sc.n_devices
    counts = np.floor(raw).astype(int)
    rest = sc.n_devices - counts.sum()
    order = np.lexsort((np.arange(len(zones)), -(raw - counts)))
    counts[order[:rest]] += 1
    devices = []
    for z, n in zip(zones, counts):
        homes = [world.random_point(z, rng) for _ in range(n)]
        start = len(devices)
        devices.extend(Device(f"dev{start + k:05d}", homes[k], z.zone_id) for k in range(n))
        n_emp = int(round(sc.employment_rate * n))
        if n_emp == 0:
            continue
        emp = np.sort(rng.choice(n, size=n_emp, replace=False))
        lat, lon, wz = world.place(np.array([homes[k] for k in emp]), rng.uniform(8_000, 30_000, n_emp), rng,
                                   avoid=[np.full(n_emp, z.zone_id, dtype=object)], grow=1.1)
        for k, la, lo, w in zip(emp, lat, lon, wz):
            if w is not None:
                dev = devices[start + k]
                dev.work, dev.work_zone = (float(la), float(lo)), w
                dev.work_m = _dist(dev.home, dev.work)
    return devices


def _quantile_distances(n: int, mean_km: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` stratified gamma(2) draws rescaled to the exact mean (km)."""
    if n == 0:
        return np.zeros(0)
    from scipy.stats import gamma

    u = (np.arange(n) + rng.random(n)) / n
    d = gamma.ppf(u, 2.0)
    d = d / d.mean() * mean_km
    return rng.permutation(d)


def _plan_day(sc: Scenario, world: _World, devices: list[Device], by_zone: dict, day_idx: int,
              vals: np.ndarray) -> dict[int, list[tuple]]:
    """Tours of every device on one weekday: ``{device_idx: [(kind, point, zone), ...]}``."""
    rng = _stream(sc.seed, _STREAM_DAY, day_idx)
    home_p, work_r, nonwork_r, km, out_p = vals
    plans: dict[int, list[tuple]] = {}
    for zid in world.zone_ids:
        members = by_zone.get(zid, [])
        n = len(members)
        if n == 0:
            continue
        perm = rng.permutation(members)
        n_home = min(n, _sround(home_p * n, rng))
        travelers = perm[n_home:]
        employed = [d for d in travelers if devices[d].employed]
        n_work = min(len(employed), _sround(work_r * n / 2, rng))
        workers = set(rng.permutation(employed)[:n_work].tolist()) if n_work else set()
        nonworkers = [d for d in travelers if d not in workers]
        n_tours = max(_sround(nonwork_r * n / 2, rng), len(nonworkers))
        tours = {int(d): 0 for d in travelers}
        for d in nonworkers:
            tours[int(d)] = 1
        extra = n_tours - len(nonworkers)
        if extra > 0:
            slots = np.repeat(np.array(sorted(tours), dtype=np.int64),
                              [(3 if d in workers else 4) - tours[d] for d in sorted(tours)])
            pick = rng.choice(slots, size=min(extra, len(slots)), replace=False) if len(slots) else []
            for d in pick:
                tours[int(d)] += 1
        nw_list = [d for d in sorted(tours) for _ in range(tours[d])]
        n_trips = 2 * len(workers) + 2 * len(nw_list)
        need_out = max(0, _sround(out_p * n_trips, rng) - 2 * len(workers))
        n_out = min(len(nw_list), _sround(need_out / 2, rng))
        out_idx = set(rng.permutation(len(nw_list))[:n_out].tolist())

        budget = km * 1000.0 * n_trips
        work_m = sum(2 * devices[d].work_m for d in workers)
        nw_budget = max(0.0, budget - work_m)
        mean_nw = max(1000.0, nw_budget / max(1, 2 * len(nw_list)))
        planned = _quantile_distances(len(nw_list), mean_nw, rng)
        homes = np.array([devices[d].home for d in nw_list], dtype=float).reshape(-1, 2)
        home_z = np.array([devices[d].home_zone for d in nw_list], dtype=object)
        work_z = np.array([devices[d].work_zone for d in nw_list], dtype=object)
        d_lat = np.full(len(nw_list), np.nan)
        d_lon = np.full(len(nw_list), np.nan)
        d_zone = np.full(len(nw_list), None, dtype=object)
        out_sel = np.array(sorted(out_idx), dtype=np.int64)
        out_m = 0.0
        if len(out_sel):
            la, lo, zz = world.place(homes[out_sel], planned[out_sel], rng,
                                     avoid=[home_z[out_sel], work_z[out_sel]], grow=1.25)
            d_lat[out_sel], d_lon[out_sel], d_zone[out_sel] = la, lo, zz
            hit = zz != None  # noqa: E711
            out_m = 2 * float(np.sum(haversine_np(homes[out_sel, 0][hit], homes[out_sel, 1][hit], la[hit], lo[hit])))
        inside = np.flatnonzero(d_zone == None)  # noqa: E711
        if len(inside):
            mean_in = max(1000.0, (nw_budget - out_m) / (2 * len(inside)))
            dists = np.maximum(_quantile_distances(len(inside), mean_in, rng), 600.0)
            la, lo, zz = world.place(homes[inside], dists, rng, want=home_z[inside], grow=0.75)
            miss = zz == None  # noqa: E711
            if miss.any():
                la2, lo2, zz2 = world.place(homes[inside[miss]], np.full(int(miss.sum()), 800.0), rng,
                                            want=home_z[inside[miss]], grow=0.95)
                la[miss], lo[miss], zz[miss] = la2, lo2, zz2
            d_lat[inside], d_lon[inside], d_zone[inside] = la, lo, zz
        d_m = haversine_np(homes[:, 0], homes[:, 1], d_lat, d_lon) if len(nw_list) else np.zeros(0)
        for d in travelers:
            d = int(d)
            dev = devices[d]
            plans[d] = [("work", dev.work, dev.work_zone, dev.work_m)] if d in workers else []
        for k, d in enumerate(nw_list):
            if d_zone[k] is not None:
                plans[int(d)].append(("nonwork", (float(d_lat[k]), float(d_lon[k])), d_zone[k], float(d_m[k])))
    return plans


class _DeviceDay:
    """Accumulates one device's pings and true trips.

    A ping is stored as ``(ts, a_lat, a_lon, b_lat, b_lon, f, tag)``: the
    point at fraction ``f`` of the great circle from ``a`` to ``b``. ``tag``
    is -1 for dwell pings, the trip index for captured trips and
    ``-2 - index`` for uncaptured ones.
    """

    def __init__(self, dev: Device, rng: random.Random, interval_s: float, capture_prob: float):
        self.dev = dev
        self.rng = rng
        self.interval = interval_s
        self.capture = capture_prob
        self.pings: list[tuple] = []
        self.trips: list[tuple] = []
        self.last_ts = -1

    def ping(self, ts: float, a, b=None, f: float = 0.0, tag: int = -1) -> int:
        t = int(ts)
        if t <= self.last_ts:
            t = self.last_ts + 1
        self.last_ts = t
        if b is None:
            b = a
        self.pings.append((t, a[0], a[1], b[0], b[1], f, tag))
        return t

    def dwell(self, start: float, end: float, p, step=(3600.0, 5400.0)):
        """Dwell pings from ``start + 1000`` every ``step`` seconds, staying 300 s clear of ``end``."""
        t = start + 1000.0
        while t < end - 300.0:
            self.ping(t, p)
            t += self.rng.uniform(*step)

    def travel(self, dep: float, a, b, a_zone, b_zone, d: float) -> float:
        """Constant-speed move over the great circle ``a -> b`` of length ``d`` metres."""
        rnd = self.rng.random
        speed = 9.0 + 7.0 * rnd()
        arr = dep + max(60.0, d / speed)
        idx = len(self.trips)
        captured = self.capture >= 1.0 or rnd() < self.capture
        tag = idx if captured else -2 - idx
        t_dep = self.ping(dep, a, tag=tag)
        step = self.interval
        t = dep + step * (0.75 + 0.5 * rnd())
        while t < arr - 60.0:
            self.ping(t, a, b, (t - dep) / (arr - dep), tag)
            t += step * (0.75 + 0.5 * rnd())
        t_arr = self.ping(arr, b, tag=tag)
        self.trips.append((t_dep, t_arr, a, b, a_zone, b_zone, d, captured))
        return float(t_arr)


def _slerp(alat, alon, blat, blon, f):
    """Vectorized point at fraction ``f`` along great circles (degrees)."""
    la1, lo1, la2, lo2 = (np.radians(v) for v in (alat, alon, blat, blon))
    h = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    d = 2 * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    move = (f > 0) & (d > 1e-12)
    lat = np.array(alat, dtype=float)
    lon = np.array(alon, dtype=float)
    if move.any():
        dd, ff = d[move], f[move]
        s = np.sin(dd)
        ka = np.sin((1 - ff) * dd) / s
        kb = np.sin(ff * dd) / s
        c1, c2 = np.cos(la1[move]), np.cos(la2[move])
        x = ka * c1 * np.cos(lo1[move]) + kb * c2 * np.cos(lo2[move])
        y = ka * c1 * np.sin(lo1[move]) + kb * c2 * np.sin(lo2[move])
        z = ka * np.sin(la1[move]) + kb * np.sin(la2[move])
        lat[move] = np.degrees(np.arctan2(z, np.hypot(x, y)))
        lon[move] = np.degrees(np.arctan2(y, x))
    return lat, lon


def _simulate_device(sc: Scenario, dev_idx: int, dev: Device, day_nums: list[int], plans: list[list[tuple]]):
    rng = _py_rng(sc.seed, _STREAM_DEVICE, dev_idx, 0)
    sim = _DeviceDay(dev, rng, 1.0 / sc.sighting_rate_hz, sc.capture_prob)
    home = dev.home
    simulated = set(day_nums)
    for day, tours in zip(day_nums, plans):
        t0 = day * DAY_S
        sim.ping(t0 + rng.uniform(5.5, 6.25) * 3600, home)
        sim.ping(t0 + rng.uniform(6.5, 6.9) * 3600, home)
        if not tours:
            t = t0 + rng.uniform(8.0, 9.0) * 3600
            while t < t0 + 23.0 * 3600:
                sim.ping(t, home)
                t += rng.uniform(1.5, 2.5) * 3600
            continue
        if tours[0][0] == "work":
            dep = t0 + rng.uniform(7.0, 8.0) * 3600
        else:
            dep = t0 + rng.uniform(8.0, 9.5) * 3600
        for kind, q, qz, dq in tours:
            sim.ping(dep - rng.uniform(300.0, 900.0), home)
            arr = sim.travel(dep, home, q, dev.home_zone, qz, dq)
            stay = rng.uniform(7.0, 8.5) * 3600 if kind == "work" else rng.uniform(25.0, 40.0) * 60
            back = arr + stay
            if kind == "work":
                sim.dwell(arr, back, q, (5400.0, 7200.0))
            else:
                sim.ping(arr + 1000.0, q)
            arr_home = sim.travel(back, q, home, qz, dev.home_zone, dq)
            dep = arr_home + rng.uniform(25.0, 35.0) * 60
            sim.ping(arr_home + 1000.0, home)
        t = max(dep, sim.pings[-1][0] + 1000.0)
        end = max(t0 + 23.0 * 3600, t + 60.0)
        sim.ping(t, home)
        t += rng.uniform(1.0, 1.7) * 3600
        while t < end:
            sim.ping(t, home)
            t += rng.uniform(1.0, 1.7) * 3600
        if day + 1 not in simulated:
            # a late evening spilling into an unsimulated day still leaves a complete device-day
            spill = sum(1 for p in sim.pings[-4:] if p[0] >= t0 + DAY_S)
            while 0 < spill < 3:
                sim.ping(t, home)
                t += rng.uniform(1.0, 1.7) * 3600
                spill += 1
    return _finish_device(sim, _stream(sc.seed, _STREAM_DEVICE, dev_idx, 1))


def _finish_device(sim: _DeviceDay, noise: np.random.Generator, jitter_m: float = 10.0):
    arr = np.array(sim.pings, dtype=float).reshape(-1, 7)
    ts = arr[:, 0].astype(np.int64)
    tags = arr[:, 6].astype(np.int64)
    keep = np.ones(len(arr), dtype=bool)
    for idx, (dep, end, _, _, _, _, d, captured) in enumerate(sim.trips):
        if captured:
            continue
        # an uncaptured trip also hides the dwell pings around it, long enough
        # that the implied speed across the gap stays below 1 m/s
        pad = max(0.0, (d - (end - dep)) / 2.0) + 600.0
        keep &= ~((tags == -2 - idx) | ((tags == -1) & (ts >= dep - pad) & (ts <= end + pad)))
    arr, ts, tags = arr[keep], ts[keep], tags[keep]
    lat, lon = _slerp(arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5])
    n = len(arr)
    lat = lat + noise.normal(0.0, jitter_m, n) / _M_PER_DEG
    lon = lon + noise.normal(0.0, jitter_m, n) / (_M_PER_DEG * np.cos(np.radians(lat)))
    acc = np.round(noise.uniform(5.0, 50.0, n), 1)
    counts = np.bincount(tags[tags >= 0], minlength=len(sim.trips))
    dev = sim.dev.device_id
    trips = [(trip_id_for(dev, dep), dev, dep, end, a[0], a[1], b[0], b[1], az, bz, d, int(counts[i]))
             for i, (dep, end, a, b, az, bz, d, captured) in enumerate(sim.trips)]
    return dev, (ts, lat, lon), acc, trips


def _simulate_block(sc, items, day_nums):
    return [_simulate_device(sc, i, dev, day_nums, plans) for i, dev, plans in items]


def _case_frame(sc: Scenario, devices_zone_pop: dict[str, tuple[str, float]]) -> pd.DataFrame:
    cc = sc.case_curve
    rng = _stream(sc.seed, _STREAM_CASES)
    days = np.arange(np.datetime64(to_date(cc.start)), np.datetime64(to_date(cc.end)) + 1)
    t = (days - np.datetime64(to_date(cc.midpoint))).astype(float)
    rows = {}
    for county in sorted(devices_zone_pop):
        state, pop = devices_zone_pop[county]
        shift = float(rng.uniform(-cc.midpoint_jitter_days, cc.midpoint_jitter_days))
        k = cc.attack_rate * pop
        rows[(county, state)] = np.floor(k / (1.0 + np.exp(-cc.growth_per_day * (t - shift)))).astype(np.int64)
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=[str(d) for d in days])
    frame.index = pd.MultiIndex.from_tuples(frame.index, names=["county_id", "state_id"])
    return frame


def generate(scenario: Scenario, n_jobs: int | None = None) -> SynthOutput:
    """Run a scenario; identical scenarios give identical outputs for any ``n_jobs``."""
    sc = scenario
    world = _World(sc.zones)
    devices = _setup_devices(sc, world)
    by_zone: dict[str, list[int]] = {}
    for i, d in enumerate(devices):
        by_zone.setdefault(d.home_zone, []).append(i)
    dates = sc.dates
    vals = phase_values(sc).to_numpy()
    day_plans = [_plan_day(sc, world, devices, by_zone, k, vals[k]) for k in range(len(dates))]
    day_nums = iso_to_day(dates).tolist()
    items = [(i, d, [day_plans[k].get(i, []) for k in range(len(dates))]) for i, d in enumerate(devices)]
    jobs = n_jobs or 1
    if jobs == 1:
        results = _simulate_block(sc, items, day_nums)
    else:
        n_chunks = min(len(items), 4 * abs(jobs))
        chunks = [items[i::n_chunks] for i in range(n_chunks)]
        parts = Parallel(n_jobs=jobs)(delayed(_simulate_block)(sc, c, day_nums) for c in chunks)
        flat = {}
        for c, part in zip(chunks, parts):
            for (i, _, _), res in zip(c, part):
                flat[i] = res
        results = [flat[i] for i in range(len(items))]

    n_rows = [len(r[1][0]) for r in results]
    sightings = pd.DataFrame({
        "device_id": np.repeat([r[0] for r in results], n_rows).astype(object),
        "ts": np.concatenate([r[1][0] for r in results]) if results else np.zeros(0, np.int64),
        "lat": np.round(np.concatenate([r[1][1] for r in results]), 6),
        "lon": np.round(np.concatenate([r[1][2] for r in results]), 6),
        "accuracy_m": np.concatenate([r[2] for r in results]),
    })
    trips = pd.DataFrame([t for r in results for t in r[3]], columns=TRIP_COLUMNS)
    trips = trips.astype({"departure_ts": np.int64, "arrival_ts": np.int64, "n_points": np.int64})
    profiles = pd.DataFrame({
        "device_id": [d.device_id for d in devices],
        "home_zone": [d.home_zone for d in devices],
        "work_zone": [d.work_zone for d in devices],
        "employed": [d.employed for d in devices],
    })
    _, dw, _ = county_device_weights(profiles, world.index)
    dated = trip_dates(trips, dw, world.index)
    truth_metrics = compute_metrics(dated, profiles, dw, None, world.index, panel=None, dates=dates)
    year = int(dates[0][:4])
    rates = observed_trip_rates(dated, dw, calibration_dates(year))
    targets = {r.state_id: float(r.observed_rate) for r in rates.itertuples(index=False)
               if np.isfinite(r.observed_rate)}
    cases = None
    if sc.case_curve is not None:
        county_info = {}
        for z in world.index:
            st, pop = county_info.get(z.county_id, (z.state_id, 0.0))
            county_info[z.county_id] = (st, pop + z.population)
        cases = _case_frame(sc, county_info)
    return SynthOutput(sc, sightings, trips, profiles, truth_metrics, targets, cases, devices)


def write_outputs(out: SynthOutput, directory) -> dict[str, Path]:
    """Write every synth artifact into ``directory``; returns the paths by name."""
    from .geo import dump_zones
    from .ingest import write_sightings
    from .metrics import write_metrics

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "zones": d / "zones.json",
        "sightings": d / "sightings.csv",
        "truth_trips": d / "truth_trips.csv",
        "truth_profiles": d / "truth_profiles.csv",
        "truth_metrics": d / "truth_metrics.csv",
        "target_rates": d / "target_rates.json",
        "scenario": d / "scenario.json",
    }
    dump_zones(out.scenario.zones, paths["zones"])
    write_sightings(out.sightings, paths["sightings"])
    out.truth_trips.to_csv(paths["truth_trips"], index=False, float_format="%.6f", lineterminator="\n")
    out.truth_profiles.to_csv(paths["truth_profiles"], index=False, lineterminator="\n")
    write_metrics(out.truth_metrics, paths["truth_metrics"])
    with open(paths["target_rates"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump({k: round(v, 12) for k, v in sorted(out.target_rates.items())}, fh, indent=1)
        fh.write("\n")
    dump_scenario(out.scenario, paths["scenario"])
    if out.cases is not None:
        paths["cases"] = d / "cases.csv"
        out.cases.reset_index().to_csv(paths["cases"], index=False, lineterminator="\n")
    return paths
