"""Computational-geometry kernel.

Distances are great-circle (haversine). Containment against admin polygons
works directly in lon/lat degrees. Ellipse and hull math that needs metric
distances uses a local equirectangular projection about the point set's
centroid, which is adequate at city scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import GeometryError, LineString, Point, Polygon

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_DEG = 111_320.0
AXIS_EPS_M = 1e-9

__all__ = [
    "EARTH_RADIUS_M",
    "METERS_PER_DEG",
    "DegenerateGeometryError",
    "Ellipse",
    "haversine_m",
    "haversine_m_array",
    "point_in_polygon",
    "points_in_ring",
    "centroid",
    "to_local_m",
    "from_local_m",
    "sde",
    "point_in_ellipse",
    "points_in_ellipse",
    "ellipse_to_polygon",
    "convex_hull",
    "min_bounding_rect",
    "line_length_m",
]


class DegenerateGeometryError(GeometryError):
    """Input points do not span enough of the plane for the operation."""


def _xy(p) -> tuple[float, float]:
    if isinstance(p, Point):
        return p.lon, p.lat
    return float(p[0]), float(p[1])


def haversine_m(a, b) -> float:
    lon1, lat1 = _xy(a)
    lon2, lat2 = _xy(b)
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_m_array(lon, lat, center) -> np.ndarray:
    """Vectorized haversine from many points to one center."""
    clon, clat = _xy(center)
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    phi1 = np.radians(lat)
    phi2 = math.radians(clat)
    dphi = phi2 - phi1
    dlmb = np.radians(clon - lon)
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * math.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _ring_of(poly) -> Sequence[tuple[float, float]]:
    ring = poly.ring if isinstance(poly, Polygon) else poly
    if len(ring) < 4:
        raise GeometryError(f"degenerate ring with {len(ring)} points")
    return ring


def point_in_polygon(p, poly) -> bool:
    """Even-odd ray casting on the outer ring; edges and vertices count as inside."""
    ring = _ring_of(poly)
    x, y = _xy(p)
    inside = False
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if (
            cross == 0
            and min(x1, x2) <= x <= max(x1, x2)
            and min(y1, y2) <= y <= max(y1, y2)
        ):
            return True
        if (y1 > y) != (y2 > y) and (cross > 0) == (y2 > y1):
            inside = not inside
    return inside


# points x edges elements evaluated per pass in points_in_ring
_RING_BLOCK = 1 << 16


def points_in_ring(x: np.ndarray, y: np.ndarray, ring) -> np.ndarray:
    """Vectorized :func:`point_in_polygon`; same arithmetic, same answers.

    Only (point, edge) pairs with the point inside the edge's latitude span
    can cross or touch, so the cross product is evaluated on those alone and
    the crossing parity is the per-point count mod 2.
    """
    ring = np.asarray(_ring_of(ring), dtype=float)
    x1, y1, x2, y2 = ring[:-1, 0], ring[:-1, 1], ring[1:, 0], ring[1:, 1]
    lo_x, hi_x = np.minimum(x1, x2), np.maximum(x1, x2)
    lo_y, hi_y = np.minimum(y1, y2), np.maximum(y1, y2)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(x.shape, dtype=bool)
    step = max(1, _RING_BLOCK // len(x1))
    for lo in range(0, len(x), step):
        px, py = x[lo:lo + step], y[lo:lo + step]
        col = py[:, None]
        r, e = np.nonzero((col >= lo_y) & (col <= hi_y))
        if not len(r):
            continue
        qx, qy = px[r], py[r]
        a1, b1, a2, b2 = x1[e], y1[e], x2[e], y2[e]
        cross = (a2 - a1) * (qy - b1) - (b2 - b1) * (qx - a1)
        crossing = ((b1 > qy) != (b2 > qy)) & ((cross > 0) == (b2 > b1))
        inside = (np.bincount(r[crossing], minlength=len(px)) & 1).astype(bool)
        touch = (cross == 0) & (qx >= lo_x[e]) & (qx <= hi_x[e])
        inside[r[touch]] = True
        out[lo:lo + step] = inside
    return out


def centroid(points: Sequence) -> Point:
    if len(points) == 0:
        raise ValueError("centroid of an empty point set")
    xs = [_xy(p) for p in points]
    return Point(math.fsum(p[0] for p in xs) / len(xs), math.fsum(p[1] for p in xs) / len(xs))


def to_local_m(lon, lat, origin) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection to meters east/north of ``origin``."""
    olon, olat = _xy(origin)
    kx = METERS_PER_DEG * math.cos(math.radians(olat))
    return (np.asarray(lon, dtype=float) - olon) * kx, (np.asarray(lat, dtype=float) - olat) * METERS_PER_DEG


def from_local_m(x, y, origin) -> tuple[np.ndarray, np.ndarray]:
    olon, olat = _xy(origin)
    kx = METERS_PER_DEG * math.cos(math.radians(olat))
    return np.asarray(x, dtype=float) / kx + olon, np.asarray(y, dtype=float) / METERS_PER_DEG + olat


@dataclass(frozen=True)
class Ellipse:
    """Standard deviational ellipse.

    ``theta`` is the clockwise angle from north to the major axis, in [0, pi).
    """

    center: Point
    semi_major_m: float
    semi_minor_m: float
    theta: float
    k: float = 1.0

    def __post_init__(self):
        if not self.semi_major_m >= self.semi_minor_m >= 0:
            raise GeometryError("ellipse needs semi_major_m >= semi_minor_m >= 0")

    def scaled(self, k: float) -> "Ellipse":
        """Same ellipse with the axes rescaled to ``k`` standard deviations."""
        f = k / self.k
        return Ellipse(self.center, self.semi_major_m * f, self.semi_minor_m * f, self.theta, k)


def _coords_array(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray([_xy(p) for p in points], dtype=float) if not isinstance(points, np.ndarray) else points
    arr = np.asarray(arr, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _axis_sd(dx, dy, theta, sqrt2: bool) -> tuple[float, float]:
    # spread along (sin t, cos t) and along the perpendicular (cos t, -sin t)
    s, c = math.sin(theta), math.cos(theta)
    n = len(dx)
    along = math.sqrt(float(np.sum((dx * s + dy * c) ** 2)) / n)
    across = math.sqrt(float(np.sum((dx * c - dy * s) ** 2)) / n)
    if sqrt2:
        along *= math.sqrt(2.0)
        across *= math.sqrt(2.0)
    return along, across


def sde(points, k: float = 1.0, sqrt2_correction: bool = True) -> Ellipse:
    """Standard deviational ellipse of a point set, scaled to ``k`` sigma.

    The rotation uses the classical arctangent expression over the
    deviation sums. With ``sqrt2_correction`` both axis deviations are
    multiplied by sqrt(2).
    """
    if k <= 0:
        raise ValueError("k must be positive")
    lon, lat = _coords_array(points)
    if len(lon) < 3:
        raise DegenerateGeometryError(f"SDE needs at least 3 points, got {len(lon)}")
    if np.all(lon == lon[0]) and np.all(lat == lat[0]):
        raise DegenerateGeometryError("all points are identical")
    center = Point(math.fsum(lon) / len(lon), math.fsum(lat) / len(lat))
    dx, dy = to_local_m(lon, lat, center)

    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    sxy = float(np.sum(dx * dy))
    a = sxx - syy
    if sxy == 0.0:
        theta = math.pi / 2 if a > 0 else 0.0
    else:
        theta = math.atan((a + math.sqrt(a * a + 4 * sxy * sxy)) / (2 * sxy))
    theta %= math.pi

    major, minor = _axis_sd(dx, dy, theta, sqrt2_correction)
    if major < minor:
        major, minor = minor, major
        theta = (theta + math.pi / 2) % math.pi
    return Ellipse(center, k * major, k * minor, theta, k)


def points_in_ellipse(lon, lat, e: Ellipse) -> np.ndarray:
    x, y = to_local_m(lon, lat, e.center)
    s, c = math.sin(e.theta), math.cos(e.theta)
    u = x * s + y * c
    v = x * c - y * s
    a = max(e.semi_major_m, AXIS_EPS_M)
    b = max(e.semi_minor_m, AXIS_EPS_M)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def point_in_ellipse(p, e: Ellipse) -> bool:
    lon, lat = _xy(p)
    return bool(points_in_ellipse(np.array([lon]), np.array([lat]), e)[0])


def ellipse_to_polygon(e: Ellipse, segments: int = 64) -> Polygon:
    t = np.linspace(0.0, 2 * math.pi, segments, endpoint=False)
    u = e.semi_major_m * np.cos(t)
    v = max(e.semi_minor_m, AXIS_EPS_M) * np.sin(t)
    s, c = math.sin(e.theta), math.cos(e.theta)
    x = u * s + v * c
    y = u * c - v * s
    lon, lat = from_local_m(x, y, e.center)
    ring = list(zip(lon.tolist(), lat.tolist()))
    return Polygon(ring + [ring[0]])


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> Polygon:
    """Monotone-chain hull: counterclockwise, closed, collinear points dropped."""
    pts = sorted(set(_xy(p) for p in points))
    if len(pts) < 3:
        raise DegenerateGeometryError("convex hull needs at least 3 distinct points")
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("all points are collinear")
    return Polygon(hull + [hull[0]])


def min_bounding_rect(points) -> Polygon:
    if len(points) == 0:
        raise ValueError("bounding rectangle of an empty point set")
    xy = [_xy(p) for p in points]
    x0 = min(p[0] for p in xy)
    x1 = max(p[0] for p in xy)
    y0 = min(p[1] for p in xy)
    y1 = max(p[1] for p in xy)
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])


def line_length_m(line: LineString) -> float:
    return math.fsum(haversine_m(a, b) for a, b in zip(line.coords, line.coords[1:]))
