"""Great-circle distance."""

from __future__ import annotations

import math

from .kg import GeoCoordinate

EARTH_RADIUS_KM = 6371.0088  # mean Earth radius


def geo_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Haversine distance in kilometres."""
    if a == b:
        return 0.0
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))
