"""Geodesic helpers: distances, centroids, and path interpolation.

Everything here assumes a spherical Earth with radius 6,371,000 m. At the
scale of interest (cells spanning city blocks) the error against an
ellipsoidal model is far below measurement noise, so no projection system
is used. Centroids and perpendicular offsets use a local planar
approximation and are only valid for small extents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

# meters per degree of latitude on the reference sphere
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-style lat/lon pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate: ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range [-180, 180]")


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in meters."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def centroid(points: list[GeoPoint] | tuple[GeoPoint, ...]) -> GeoPoint:
    """Arithmetic mean of latitudes and longitudes.

    Valid only for small extents; refuses point sets spanning 90 degrees
    or more of longitude since a planar mean is meaningless across the
    antimeridian.
    """
    if not points:
        raise ValueError("centroid of empty point list")
    lons = [p.lon for p in points]
    if max(lons) - min(lons) >= 90.0:
        raise ValueError("points span >= 90 degrees of longitude; centroid undefined")
    n = len(points)
    return GeoPoint(sum(p.lat for p in points) / n, sum(lons) / n)


def trace_length(trace) -> float:
    """Total path length of a scan trace in meters (0 for a single scan)."""
    scans = trace.scans
    return sum(
        haversine(scans[i].pos, scans[i + 1].pos) for i in range(len(scans) - 1)
    )


def path_lengths(path: tuple[GeoPoint, ...] | list[GeoPoint]) -> list[float]:
    """Cumulative distance in meters at each vertex of a polyline.

    Starts at 0.0; the final entry is the total path length.
    """
    if len(path) < 1:
        raise ValueError("empty path")
    out = [0.0]
    for i in range(len(path) - 1):
        out.append(out[-1] + haversine(path[i], path[i + 1]))
    return out


def point_along(
    path: tuple[GeoPoint, ...] | list[GeoPoint],
    cumulative: list[float],
    distance: float,
    offset: float = 0.0,
) -> GeoPoint:
    """Point at `distance` meters along a polyline, shifted `offset` meters
    perpendicular to the local segment direction (positive = left of travel).

    `cumulative` must be path_lengths(path). `distance` is clamped to
    [0, total]. Uses a local equirectangular frame, so offsets are accurate
    only for small extents.
    """
    total = cumulative[-1]
    if total <= 0.0:
        raise ValueError("zero-length path")
    d = min(max(distance, 0.0), total)

    # find segment containing d (last segment for d == total)
    seg = len(path) - 2
    for i in range(len(path) - 1):
        if d <= cumulative[i + 1] and cumulative[i + 1] > cumulative[i]:
            seg = i
            break
    a, b = path[seg], path[seg + 1]
    seg_len = cumulative[seg + 1] - cumulative[seg]
    f = (d - cumulative[seg]) / seg_len if seg_len > 0 else 0.0
    lat = a.lat + f * (b.lat - a.lat)
    lon = a.lon + f * (b.lon - a.lon)
    if offset == 0.0:
        return GeoPoint(lat, lon)

    # unit direction of the segment in local planar meters
    clat = math.cos(math.radians((a.lat + b.lat) / 2))
    dx = (b.lon - a.lon) * clat * _M_PER_DEG
    dy = (b.lat - a.lat) * _M_PER_DEG
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise ValueError("degenerate path segment")
    # left-hand perpendicular
    px, py = -dy / norm, dx / norm
    lat += offset * py / _M_PER_DEG
    lon += offset * px / (_M_PER_DEG * math.cos(math.radians(lat)))
    return GeoPoint(lat, lon)
