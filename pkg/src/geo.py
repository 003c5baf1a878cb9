from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgumentError

# Mean Earth radius (IUGG), metres.
EARTH_RADIUS_M = 6371008.8


def check_coordinate(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise InvalidArgumentError(f"coordinate out of range: ({lat}, {lon})")


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in metres between two (lat, lon) points in degrees."""
    check_coordinate(*a)
    check_coordinate(*b)
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_many(origin: tuple[float, float], points: np.ndarray) -> np.ndarray:
    """
    Distances in metres from one (lat, lon) to an N x 2 array of (lat, lon).
    Same formula as haversine, vectorised for scoring retrieved tiles.
    """
    check_coordinate(*origin)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.size and (
        np.abs(points[:, 0]).max() > 90.0 or np.abs(points[:, 1]).max() > 180.0
    ):
        raise InvalidArgumentError("coordinate array has out-of-range entries")
    lat1, lon1 = np.radians(origin[0]), np.radians(origin[1])
    lat2 = np.radians(points[:, 0])
    lon2 = np.radians(points[:, 1])
    h = (
        np.sin((lat2 - lat1) / 2.0) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def offset_position(lat: float, lon: float, north_m: float, east_m: float) -> tuple[float, float]:
    """
    Move a point by small north/east offsets on the sphere (local tangent plane).
    Good to well under a centimetre for the few-kilometre grids the synthetic
    world lays out.
    """
    check_coordinate(lat, lon)
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(lat))))
    return lat + dlat, lon + dlon
