import numpy as np
import pytest

from src.errors import InvalidArgumentError
from src.geo import haversine, haversine_many, offset_position


def test_thousandth_degree_of_longitude_at_equator():
    assert haversine((0.0, 0.0), (0.0, 0.001)) == pytest.approx(111.195, abs=0.01)


def test_zero_distance():
    assert haversine((40.1, -75.2), (40.1, -75.2)) == 0.0


def test_antipodes_do_not_overflow():
    assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(np.pi * 6371008.8)


def test_metric_properties():
    rng = np.random.default_rng(0)
    lat = rng.uniform(-90, 90, size=(1000, 3))
    lon = rng.uniform(-180, 180, size=(1000, 3))
    for (la, lb, lc), (oa, ob, oc) in zip(lat, lon):
        a, b, c = (la, oa), (lb, ob), (lc, oc)
        ab = haversine(a, b)
        assert ab == pytest.approx(haversine(b, a), abs=1e-6)
        assert haversine(a, c) <= ab + haversine(b, c) + 1e-6


@pytest.mark.parametrize("point", [(91.0, 0.0), (-90.5, 0.0), (0.0, 180.1), (0.0, -200.0)])
def test_invalid_coordinates(point):
    with pytest.raises(InvalidArgumentError):
        haversine(point, (0.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        haversine_many((0.0, 0.0), np.array([point]))


def test_haversine_many_matches_scalar():
    origin = (40.0, -75.0)
    points = np.array([[40.0, -75.0], [40.001, -75.0], [39.5, -74.2], [-10.0, 120.0]])
    many = haversine_many(origin, points)
    for p, d in zip(points, many):
        assert d == pytest.approx(haversine(origin, tuple(p)), rel=1e-12, abs=1e-9)
    assert haversine_many(origin, np.zeros((0, 2))).shape == (0,)


@pytest.mark.parametrize("north,east", [(25.0, 0.0), (0.0, 25.0), (300.0, -400.0)])
def test_offset_position_distance(north, east):
    moved = offset_position(40.0, -75.0, north, east)
    assert haversine((40.0, -75.0), moved) == pytest.approx(np.hypot(north, east), rel=1e-4)
