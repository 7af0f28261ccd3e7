"""Point, polyline and polygon footprints from clusters of matching records."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    DegenerateGeometryError,
    Ellipse,
    centroid,
    convex_hull,
    haversine_m_array,
    min_bounding_rect,
    point_in_polygon,
    points_in_ellipse,
    sde,
)
from .jobs import rank_tags
from .model import GazetteerEntry, GeoRecord, LineString, Polygon, record_tokens

logger = logging.getLogger(__name__)

__all__ = [
    "InsufficientDataError",
    "FuzzyParams",
    "DEFAULT_FUZZY",
    "AlphaCut",
    "fuzzy_membership",
    "fuzzy_membership_array",
    "alpha_cut",
    "alpha_cut_closed_form",
    "tag_counts",
    "extract_point_entry",
    "extract_line_entry",
    "extract_polygon_entry",
]


class InsufficientDataError(ValueError):
    """Too few usable records to build the requested footprint."""


@dataclass(frozen=True)
class FuzzyParams:
    """Distance-decay membership parameters.

    ``d1`` and ``d2`` are meters. In the middle branch the distance is
    divided by ``unit_scale`` before ``c / d**beta`` is evaluated.
    """

    beta: float = 1.0
    c: float = 5.0
    d1: float = 50.0
    d2: float = 5000.0
    unit_scale: float = 1.0

    def __post_init__(self):
        bad = []
        if not self.beta > 0:
            bad.append("beta")
        if not self.c > 0:
            bad.append("c")
        if not 0 <= self.d1 < self.d2:
            bad.append("d1/d2")
        if not self.unit_scale > 0:
            bad.append("unit_scale")
        if bad:
            raise ValueError("invalid fuzzy parameters: " + ", ".join(bad))


DEFAULT_FUZZY = FuzzyParams(beta=1.0, c=5.0, d1=50.0, d2=5000.0)


def fuzzy_membership(d_m: float, p: FuzzyParams) -> float:
    if d_m < 0:
        raise ValueError("distance must be non-negative")
    if d_m <= p.d1:
        return 1.0
    if d_m >= p.d2:
        return 0.0
    return min(1.0, max(0.0, p.c / (d_m / p.unit_scale) ** p.beta))


def fuzzy_membership_array(d_m, p: FuzzyParams) -> np.ndarray:
    d = np.asarray(d_m, dtype=float)
    with np.errstate(divide="ignore"):
        mid = np.clip(p.c / (d / p.unit_scale) ** p.beta, 0.0, 1.0)
    return np.where(d <= p.d1, 1.0, np.where(d >= p.d2, 0.0, mid))


@dataclass(frozen=True)
class AlphaCut:
    alpha: float
    members: tuple[tuple[GeoRecord, float], ...]

    @property
    def records(self) -> list[GeoRecord]:
        return [r for r, _ in self.members]


def _lonlat(records: Sequence[GeoRecord]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.fromiter((r.lon for r in records), dtype=float, count=len(records)),
        np.fromiter((r.lat for r in records), dtype=float, count=len(records)),
    )


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")


def alpha_cut(records: Sequence[GeoRecord], center, p: FuzzyParams, alpha: float) -> AlphaCut:
    """Records whose membership with respect to ``center`` is at least ``alpha``."""
    _check_alpha(alpha)
    lon, lat = _lonlat(records)
    mu = fuzzy_membership_array(haversine_m_array(lon, lat, center), p)
    return AlphaCut(alpha, tuple((r, float(m)) for r, m in zip(records, mu) if m >= alpha))


def alpha_cut_closed_form(records: Sequence[GeoRecord], center, p: FuzzyParams, alpha: float) -> list[GeoRecord]:
    """Distance-threshold form of the cut, valid for ``beta == 1``."""
    _check_alpha(alpha)
    if p.beta != 1:
        raise ValueError("closed form only holds for beta == 1")
    lon, lat = _lonlat(records)
    d = haversine_m_array(lon, lat, center)
    keep = (d <= max(p.d1, p.c / alpha * p.unit_scale)) & (d < p.d2)
    return [r for r, k in zip(records, keep) if k]


def tag_counts(records: Sequence[GeoRecord]) -> dict[str, int]:
    """Per-token record counts (a record counts once per token)."""
    out: dict[str, int] = {}
    for r in records:
        for t in set(record_tokens(r)):
            out[t] = out.get(t, 0) + 1
    return out


def _entry(name, feature_type, footprint, used: Sequence[GeoRecord], top_k: int, attributes: dict) -> GazetteerEntry:
    contributors = frozenset(r.user_id for r in used)
    return GazetteerEntry(
        name=name,
        feature_type=feature_type,
        footprint=footprint,
        top_tags=tuple(rank_tags(tag_counts(used), top_k)),
        contributors=contributors,
        trusted_contributors=contributors,
        n_points=len(used),
        attributes=attributes,
    )


def _ellipse_attrs(e: Ellipse) -> dict:
    return {"center": [e.center.lon, e.center.lat], "k": e.k, "semi_major_m": e.semi_major_m, "semi_minor_m": e.semi_minor_m, "theta_rad": e.theta}


def extract_point_entry(
    records: Sequence[GeoRecord],
    name: str,
    feature_type: str,
    k: float = 2.0,
    *,
    sqrt2_correction: bool = True,
    top_k: int = 10,
) -> GazetteerEntry:
    """Point footprint: centroid of the records inside the k-sigma SDE.

    Also reports the 1-sigma centroid. When the SDE is degenerate the plain
    centroid of all records is used and ``degenerate`` is set.
    """
    if len(records) < 3:
        raise InsufficientDataError(f"point footprint needs at least 3 records, got {len(records)}")
    lon, lat = _lonlat(records)
    try:
        ellipse = sde(np.column_stack([lon, lat]), k, sqrt2_correction)
        inside = points_in_ellipse(lon, lat, ellipse)
        if not inside.any():
            raise DegenerateGeometryError("no point falls inside the ellipse")
    except DegenerateGeometryError as exc:
        logger.warning("%s: degenerate SDE (%s); using plain centroid", name, exc)
        c = centroid(list(zip(lon, lat)))
        return _entry(name, feature_type, c, records, top_k, {
            "method": "point", "k": k, "degenerate": True,
            "centroid_1sigma": [c.lon, c.lat], "centroid_ksigma": [c.lon, c.lat],
        })

    sps = [r for r, m in zip(records, inside) if m]
    footprint = centroid([(r.lon, r.lat) for r in sps])
    one = ellipse.scaled(1.0)
    inner = points_in_ellipse(lon, lat, one)
    c1 = centroid([(x, y) for x, y, m in zip(lon, lat, inner) if m]) if inner.any() else ellipse.center
    attrs = {
        "method": "point",
        "k": k,
        "degenerate": False,
        "centroid_1sigma": [c1.lon, c1.lat],
        "centroid_ksigma": [footprint.lon, footprint.lat],
        "sqrt2_correction": sqrt2_correction,
        "ellipse": _ellipse_attrs(ellipse),
        "ellipse_1sigma": _ellipse_attrs(one),
        "n_matched": len(records),
        "significant_ids": sorted(r.photo_id for r in sps),
    }
    return _entry(name, feature_type, footprint, sps, top_k, attrs)


def extract_line_entry(
    records: Sequence[GeoRecord],
    name: str,
    feature_type: str,
    clip: Polygon | Sequence[Polygon] | None = None,
    *,
    top_k: int = 10,
) -> GazetteerEntry:
    """Polyline footprint: points (optionally clipped) joined in longitude order.

    Identical coordinates collapse to one vertex; ties in longitude are
    broken by latitude.
    """
    used = list(records)
    if clip is not None:
        polys = [clip] if isinstance(clip, Polygon) else list(clip)
        used = [r for r in used if any(point_in_polygon((r.lon, r.lat), poly) for poly in polys)]
    vertices = sorted({(r.lon, r.lat) for r in used})
    if len(vertices) < 2:
        raise InsufficientDataError(f"line footprint needs at least 2 distinct points, got {len(vertices)}")
    return _entry(name, feature_type, LineString(vertices), used, top_k, {
        "method": "line", "clipped": clip is not None, "n_matched": len(records),
    })


def extract_polygon_entry(
    records: Sequence[GeoRecord],
    name: str,
    feature_type: str,
    p: FuzzyParams = DEFAULT_FUZZY,
    alpha: float = 0.5,
    boundary: str = "hull",
    *,
    top_k: int = 10,
) -> GazetteerEntry:
    """Polygon footprint: the MBR or convex hull of an alpha-cut around the
    centroid of all matching records."""
    if boundary not in ("mbr", "hull"):
        raise ValueError("boundary must be 'mbr' or 'hull'")
    if not records:
        raise InsufficientDataError("no records")
    center = centroid([(r.lon, r.lat) for r in records])
    cut = alpha_cut(records, center, p, alpha)
    members = cut.records
    if not members:
        raise InsufficientDataError(f"alpha-cut at alpha={alpha} is empty")
    pts = [(r.lon, r.lat) for r in members]
    if boundary == "hull":
        if len(set(pts)) < 3:
            raise InsufficientDataError(f"alpha-cut at alpha={alpha} has fewer than 3 distinct points; try boundary='mbr'")
        try:
            footprint = convex_hull(pts)
        except DegenerateGeometryError as exc:
            raise DegenerateGeometryError(f"{exc}; try boundary='mbr'") from exc
    else:
        footprint = min_bounding_rect(pts)
    attrs = {
        "method": "polygon",
        "alpha": alpha,
        "boundary": boundary,
        "center": [center.lon, center.lat],
        "params": {"beta": p.beta, "c": p.c, "d1": p.d1, "d2": p.d2, "unit_scale": p.unit_scale},
        "degenerate": len(set(pts)) == 1,
        "n_matched": len(records),
        "memberships": {r.photo_id: mu for r, mu in cut.members},
    }
    return _entry(name, feature_type, footprint, members, top_k, attrs)
