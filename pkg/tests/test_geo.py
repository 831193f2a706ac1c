import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobility_sdi.geo import (GeoPoint, Zone, ZoneIndex, haversine_distance, haversine_np, is_simple_ring,
                              load_zones, locate, point_in_polygon, points_in_polygon, dump_zones, zone_from_dict)
from oracles import winding_number

# law-of-cosines distance, computed once from oracles.cosine_law_distance
DC_BALTIMORE_M = 56202.635402629894


def square(lat0, lon0, size=1.0):
    return (GeoPoint(lat0, lon0), GeoPoint(lat0, lon0 + size), GeoPoint(lat0 + size, lon0 + size),
            GeoPoint(lat0 + size, lon0))


def test_identity_distance_is_zero():
    p = GeoPoint(12.5, -40.25)
    assert haversine_distance(p, p) == 0.0


def test_antipodal_equator():
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 180))
    assert d == pytest.approx(math.pi * 6_371_000, rel=1e-12)
    assert round(d) == 20015087


def test_dc_baltimore_against_cosine_law():
    d = haversine_distance(GeoPoint(38.9072, -77.0369), GeoPoint(39.2904, -76.6122))
    assert abs(d - DC_BALTIMORE_M) / DC_BALTIMORE_M < 1e-3
    assert 55_000 < d < 57_000


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    lat1, lat2 = rng.uniform(-80, 80, (2, 200))
    lon1, lon2 = rng.uniform(-179, 179, (2, 200))
    vec = haversine_np(lat1, lon1, lat2, lon2)
    for k in range(200):
        assert vec[k] == pytest.approx(haversine_distance(GeoPoint(lat1[k], lon1[k]), GeoPoint(lat2[k], lon2[k])),
                                       rel=1e-12, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(-89, 89), st.floats(-179, 179), st.floats(-89, 89), st.floats(-179, 179))
def test_distance_symmetric_and_bounded(a, b, c, d):
    p, q = GeoPoint(a, b), GeoPoint(c, d)
    assert haversine_distance(p, q) == pytest.approx(haversine_distance(q, p), abs=1e-6)
    assert 0.0 <= haversine_distance(p, q) <= math.pi * 6_371_000 + 1e-6


def test_out_of_range_point_rejected():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 180.5)


def test_square_centroid_inside_and_far_point_outside():
    ring = square(0, 0)
    assert point_in_polygon(GeoPoint(0.5, 0.5), ring)
    assert not point_in_polygon(GeoPoint(10.5, 10.5), ring)


def test_random_points_match_winding_number():
    # concave "comb" ring: the winding-number oracle treats it independently of ray casting
    ring = [GeoPoint(0, 0), GeoPoint(0, 4), GeoPoint(3, 4), GeoPoint(3, 3), GeoPoint(1, 3), GeoPoint(1, 2.5),
            GeoPoint(2.5, 2.5), GeoPoint(2.5, 1.5), GeoPoint(1, 1.5), GeoPoint(1, 1), GeoPoint(3, 1), GeoPoint(3, 0)]
    xy = [(p.lon, p.lat) for p in ring]
    rng = np.random.default_rng(42)
    lat = rng.uniform(-0.5, 3.5, 1000)
    lon = rng.uniform(-0.5, 4.5, 1000)
    expected = [winding_number(x, y, xy) for x, y in zip(lon, lat)]
    got = [point_in_polygon(GeoPoint(a, b), ring) for a, b in zip(lat, lon)]
    assert got == expected
    assert points_in_polygon(lat, lon, ring).tolist() == expected


def _zone(zid, lat0, lon0, size=1.0, **kw):
    return Zone(zid, kw.get("county", "C" + zid), kw.get("state", "S"), kw.get("pop", 100.0), square(lat0, lon0, size))


def test_locate_inside_outside_and_shared_edge():
    idx = ZoneIndex((_zone("B", 0, 1), _zone("A", 0, 0)))
    assert locate(GeoPoint(0.5, 0.5), idx) == "A"
    assert locate(GeoPoint(0.5, 1.5), idx) == "B"
    assert locate(GeoPoint(5.0, 5.0), idx) is None
    # lon = 1 is the shared edge of A and B
    assert locate(GeoPoint(0.5, 1.0), idx) == "A"
    assert idx.locate_many(np.array([0.5, 0.5, 5.0]), np.array([1.0, 1.5, 5.0])).tolist() == ["A", "B", None]


def test_locate_many_matches_scalar_locate():
    zones = tuple(_zone(f"Z{k}", (k // 3) * 0.5, (k % 3) * 0.5, 0.5) for k in range(9))
    idx = ZoneIndex(zones)
    rng = np.random.default_rng(3)
    lat = rng.uniform(-0.2, 1.7, 500)
    lon = rng.uniform(-0.2, 1.7, 500)
    lat[:20] = 0.5  # exact boundary rows
    many = idx.locate_many(lat, lon).tolist()
    assert many == [idx.locate(GeoPoint(a, b)) for a, b in zip(lat, lon)]


def test_zone_file_round_trip_and_validation(tmp_path):
    zones = (_zone("A", 0, 0), _zone("B", 0, 1))
    path = tmp_path / "zones.json"
    dump_zones(zones, path)
    idx = load_zones(path)
    assert [z.zone_id for z in idx] == ["A", "B"]
    assert idx["B"].boundary == zones[1].boundary
    bow = {"zone_id": "X", "county_id": "C", "state_id": "S", "population": 1,
           "boundary": [[0, 0], [1, 1], [1, 0], [0, 1]]}
    with pytest.raises(ValueError, match="self-intersecting"):
        zone_from_dict(bow)
    with pytest.raises(ValueError, match="duplicate"):
        ZoneIndex((_zone("A", 0, 0), _zone("A", 2, 2)))
    path.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(ValueError):
        load_zones(path)


def test_simple_ring():
    assert is_simple_ring(square(0, 0))
    assert not is_simple_ring((GeoPoint(0, 0), GeoPoint(1, 1), GeoPoint(1, 0), GeoPoint(0, 1)))
