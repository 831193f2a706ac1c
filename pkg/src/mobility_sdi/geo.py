"""Spherical distances and zone membership.

Distances use a sphere of radius 6,371,000 m. Point-in-polygon tests run in
the planar lon/lat plane, which is fine for small zones away from the poles
and the antimeridian (antimeridian-crossing polygons are not supported).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinates out of range: lat={self.lat}, lon={self.lon}")


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_np(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine over broadcastable arrays of degrees."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _on_segment(px, py, ax, ay, bx, by, tol=1e-12) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > tol * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    return (min(ax, bx) - tol <= px <= max(ax, bx) + tol
            and min(ay, by) - tol <= py <= max(ay, by) + tol)


def point_in_polygon(p: GeoPoint, ring: Sequence[GeoPoint]) -> bool:
    """Ray-casting parity test; points on the boundary count as inside."""
    n = len(ring)
    if n < 3:
        raise ValueError("polygon ring needs at least 3 vertices")
    x, y = p.lon, p.lat
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = ring[i].lon, ring[i].lat
        xj, yj = ring[j].lon, ring[j].lat
        if _on_segment(x, y, xi, yi, xj, yj):
            return True
        if (yi > y) != (yj > y):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def points_in_polygon(lat: np.ndarray, lon: np.ndarray, ring: Sequence[GeoPoint]) -> np.ndarray:
    """Vectorized version of :func:`point_in_polygon` over many points."""
    n = len(ring)
    if n < 3:
        raise ValueError("polygon ring needs at least 3 vertices")
    x = np.asarray(lon, dtype=float)
    y = np.asarray(lat, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    boundary = np.zeros(x.shape, dtype=bool)
    tol = 1e-12
    for i in range(n):
        j = i - 1
        xi, yi = ring[i].lon, ring[i].lat
        xj, yj = ring[j].lon, ring[j].lat
        cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
        on = ((np.abs(cross) <= tol * max(1.0, abs(xj - xi) + abs(yj - yi)))
              & (x >= min(xi, xj) - tol) & (x <= max(xi, xj) + tol)
              & (y >= min(yi, yj) - tol) & (y <= max(yi, yj) + tol))
        boundary |= on
        straddle = (yi > y) != (yj > y)
        if yj != yi:
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= straddle & (x < x_cross)
    return inside | boundary


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def within(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and within(p1, p2, p3)) or (o2 == 0 and within(p1, p2, p4))
            or (o3 == 0 and within(p3, p4, p1)) or (o4 == 0 and within(p3, p4, p2)))


def is_simple_ring(ring: Sequence[GeoPoint]) -> bool:
    """True when no two non-adjacent edges of the ring intersect. O(n^2)."""
    pts = [(p.lon, p.lat) for p in ring]
    n = len(pts)
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


@dataclass(frozen=True)
class Zone:
    zone_id: str
    county_id: str
    state_id: str
    population: float
    boundary: tuple[GeoPoint, ...]
    utc_offset_hours: float = 0.0

    def __post_init__(self):
        if self.population < 0:
            raise ValueError(f"zone {self.zone_id}: negative population")
        if len(self.boundary) < 3:
            raise ValueError(f"zone {self.zone_id}: boundary needs at least 3 vertices")

    @cached_property
    def bbox(self) -> tuple[float, float, float, float]:
        lats = [p.lat for p in self.boundary]
        lons = [p.lon for p in self.boundary]
        return min(lats), min(lons), max(lats), max(lons)


@dataclass
class ZoneIndex:
    """Immutable zone set with a uniform-grid bounding-box index.

    Each grid cell lists the zones whose bounding box overlaps it, in
    lexicographic ``zone_id`` order so that :meth:`locate` resolves shared
    boundaries to the smallest id.
    """

    zones: tuple[Zone, ...]
    cell_deg: float = 0.25
    _cells: dict = field(init=False, repr=False)
    _by_id: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.zones = tuple(sorted(self.zones, key=lambda z: z.zone_id))
        ids = [z.zone_id for z in self.zones]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate zone_id in zone set")
        self._by_id = {z.zone_id: z for z in self.zones}
        self._cells = {}
        for k, z in enumerate(self.zones):
            lat0, lon0, lat1, lon1 = z.bbox
            for ci in range(self._cell(lat0), self._cell(lat1) + 1):
                for cj in range(self._cell(lon0), self._cell(lon1) + 1):
                    self._cells.setdefault((ci, cj), []).append(k)

    def _cell(self, v: float) -> int:
        return math.floor(v / self.cell_deg)

    def __getitem__(self, zone_id: str) -> Zone:
        return self._by_id[zone_id]

    def __contains__(self, zone_id: str) -> bool:
        return zone_id in self._by_id

    def __iter__(self):
        return iter(self.zones)

    def __len__(self):
        return len(self.zones)

    def candidates(self, p: GeoPoint) -> list[Zone]:
        ks = self._cells.get((self._cell(p.lat), self._cell(p.lon)), [])
        out = []
        for k in ks:
            lat0, lon0, lat1, lon1 = self.zones[k].bbox
            if lat0 <= p.lat <= lat1 and lon0 <= p.lon <= lon1:
                out.append(self.zones[k])
        return out

    def locate(self, p: GeoPoint) -> str | None:
        for z in self.candidates(p):
            if point_in_polygon(p, z.boundary):
                return z.zone_id
        return None

    def locate_many(self, lat, lon) -> np.ndarray:
        """Zone id per point (object array, ``None`` outside all zones)."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        out = np.full(lat.shape, None, dtype=object)
        todo = np.ones(lat.shape, dtype=bool)
        # zones are sorted by id, so first hit wins the tie-break
        for z in self.zones:
            lat0, lon0, lat1, lon1 = z.bbox
            cand = todo & (lat >= lat0) & (lat <= lat1) & (lon >= lon0) & (lon <= lon1)
            if not cand.any():
                continue
            idx = np.flatnonzero(cand)
            hit = points_in_polygon(lat[idx], lon[idx], z.boundary)
            out[idx[hit]] = z.zone_id
            todo[idx[hit]] = False
        return out

    def county_of(self, zone_id: str | None) -> str | None:
        return None if zone_id is None else self._by_id[zone_id].county_id

    def state_of(self, zone_id: str | None) -> str | None:
        return None if zone_id is None else self._by_id[zone_id].state_id

    def county_populations(self) -> dict[str, float]:
        pops: dict[str, float] = {}
        for z in self.zones:
            pops[z.county_id] = pops.get(z.county_id, 0.0) + z.population
        return pops

    def county_states(self) -> dict[str, str]:
        return {z.county_id: z.state_id for z in self.zones}


def locate(p: GeoPoint, index: ZoneIndex) -> str | None:
    """Zone containing ``p``; shared boundaries go to the smallest zone_id."""
    return index.locate(p)


def zone_from_dict(d: dict, check_simple: bool = True) -> Zone:
    boundary = tuple(GeoPoint(float(lat), float(lon)) for lat, lon in d["boundary"])
    if len(boundary) >= 2 and boundary[0] == boundary[-1]:
        raise ValueError(f"zone {d['zone_id']}: first boundary point must not be repeated")
    zone = Zone(
        zone_id=str(d["zone_id"]),
        county_id=str(d["county_id"]),
        state_id=str(d["state_id"]),
        population=float(d["population"]),
        boundary=boundary,
        utc_offset_hours=float(d.get("utc_offset_hours", 0.0)),
    )
    if check_simple and not is_simple_ring(zone.boundary):
        raise ValueError(f"zone {zone.zone_id}: boundary is self-intersecting")
    return zone


def zone_to_dict(z: Zone) -> dict:
    d = {
        "zone_id": z.zone_id,
        "county_id": z.county_id,
        "state_id": z.state_id,
        "population": z.population,
        "boundary": [[p.lat, p.lon] for p in z.boundary],
    }
    if z.utc_offset_hours:
        d["utc_offset_hours"] = z.utc_offset_hours
    return d


def load_zones(path: str | Path) -> ZoneIndex:
    """Read a zone-set JSON file (array of zone objects)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("zone file must contain a JSON array")
    return ZoneIndex(tuple(zone_from_dict(d) for d in data))


def dump_zones(zones: Iterable[Zone], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([zone_to_dict(z) for z in zones], fh, indent=1)
        fh.write("\n")
