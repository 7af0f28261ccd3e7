"""Shared domain types and the tokenizer used by every job."""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "GeometryError",
    "Point",
    "LineString",
    "Polygon",
    "MultiPolygon",
    "BBox",
    "Geometry",
    "GeoRecord",
    "GazetteerEntry",
    "tokenize",
    "record_tokens",
    "contains_subsequence",
    "parse_timestamp",
]

_SPLIT = re.compile(r"[\s,]+")


class GeometryError(ValueError):
    """Raised when a geometry violates its structural invariants."""


@dataclass(frozen=True)
class Point:
    lon: float
    lat: float

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lon, self.lat)


def _as_coords(points: Iterable) -> tuple[tuple[float, float], ...]:
    out = []
    for p in points:
        if isinstance(p, Point):
            out.append((float(p.lon), float(p.lat)))
        else:
            lon, lat = p
            out.append((float(lon), float(lat)))
    return tuple(out)


@dataclass(frozen=True)
class LineString:
    coords: tuple[tuple[float, float], ...]

    def __post_init__(self):
        coords = _as_coords(self.coords)
        object.__setattr__(self, "coords", coords)
        if len(coords) < 2:
            raise GeometryError("LineString needs at least 2 points")
        for a, b in zip(coords, coords[1:]):
            if a == b:
                raise GeometryError(f"LineString has duplicate consecutive point {a}")


@dataclass(frozen=True)
class Polygon:
    """Outer ring plus optional holes. Holes are carried for output only."""

    ring: tuple[tuple[float, float], ...]
    holes: tuple[tuple[tuple[float, float], ...], ...] = ()

    def __post_init__(self):
        ring = _as_coords(self.ring)
        object.__setattr__(self, "ring", ring)
        object.__setattr__(self, "holes", tuple(_as_coords(h) for h in self.holes))
        if len(ring) < 4:
            raise GeometryError(f"polygon ring needs at least 4 points, got {len(ring)}")
        if ring[0] != ring[-1]:
            raise GeometryError("polygon ring is not closed")

    @property
    def bbox(self) -> "BBox":
        xs = [c[0] for c in self.ring]
        ys = [c[1] for c in self.ring]
        return BBox(min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class MultiPolygon:
    parts: tuple[Polygon, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise GeometryError("MultiPolygon needs at least one part")


@dataclass(frozen=True)
class BBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if self.min_lon > self.max_lon or self.min_lat > self.max_lat:
            raise GeometryError(f"inverted bbox {self}")

    def contains(self, lon: float, lat: float) -> bool:
        return self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat


Geometry = Union[Point, LineString, Polygon, MultiPolygon, BBox]


_TS_FORMATS = ("%m/%d/%Y %H:%M", "%m/%d/%Y %H:%M:%S")


def parse_timestamp(raw: str) -> datetime | None:
    """Parse ``M/D/YYYY H:MM`` or ISO-8601 into an aware UTC datetime.

    Returns None when the string matches neither form.
    """
    raw = raw.strip()
    if not raw:
        return None
    for fmt in _TS_FORMATS:
        try:
            return datetime.strptime(raw, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            pass
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        return None
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class GeoRecord:
    """One geotagged photo row.

    Timestamps are kept as the raw strings from the source so that
    records round-trip unchanged; use :attr:`taken_at` / :attr:`uploaded_at`
    for parsed values.
    """

    photo_id: str
    title: str
    description: str
    tags: tuple[str, ...]
    taken_time: str
    uploaded_time: str
    lat: float
    lon: float
    user_id: str

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        if not self.photo_id:
            raise ValueError("photo_id must be non-empty")
        if not self.user_id:
            raise ValueError("user_id must be non-empty")

    @property
    def taken_at(self) -> datetime | None:
        return parse_timestamp(self.taken_time)

    @property
    def uploaded_at(self) -> datetime | None:
        return parse_timestamp(self.uploaded_time)

    @property
    def has_valid_coords(self) -> bool:
        return (
            math.isfinite(self.lat)
            and math.isfinite(self.lon)
            and -90.0 <= self.lat <= 90.0
            and -180.0 <= self.lon <= 180.0
        )


@dataclass(frozen=True)
class GazetteerEntry:
    """A name / feature type / footprint triple plus provenance."""

    name: str
    feature_type: str
    footprint: Point | LineString | Polygon
    top_tags: tuple[tuple[str, int], ...]
    contributors: frozenset[str]
    trusted_contributors: frozenset[str]
    n_points: int
    attributes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "top_tags", tuple((str(t), int(c)) for t, c in self.top_tags))
        object.__setattr__(self, "contributors", frozenset(self.contributors))
        object.__setattr__(self, "trusted_contributors", frozenset(self.trusted_contributors))
        if not self.trusted_contributors <= self.contributors:
            raise ValueError("trusted_contributors must be a subset of contributors")
        ordered = sorted(self.top_tags, key=lambda tc: (-tc[1], tc[0]))
        if list(self.top_tags) != ordered:
            raise ValueError("top_tags must be sorted by count desc, then token asc")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def _ascii_lower(token: str) -> str:
    if token.isascii():
        return token.lower()
    return "".join(ch.lower() if "A" <= ch <= "Z" else ch for ch in token)


def tokenize(text: str) -> list[str]:
    """Split on whitespace and commas, strip surrounding punctuation,
    lowercase ASCII letters. Non-ASCII characters pass through untouched.

    >>> tokenize("California, CA, trip, sea")
    ['california', 'ca', 'trip', 'sea']
    """
    out = []
    for raw in _SPLIT.split(text):
        # str.split() and \s disagree on a few control characters
        for piece in raw.split():
            tok = _strip_punct(piece)
            if tok:
                out.append(_ascii_lower(tok))
    return out


def record_tokens(record: GeoRecord, fields: Sequence[str] = ("tags", "title")) -> list[str]:
    """Tokens of the chosen record fields, concatenated in field order."""
    out: list[str] = []
    for name in fields:
        if name == "tags":
            for tag in record.tags:
                out.extend(tokenize(tag))
        else:
            out.extend(tokenize(getattr(record, name)))
    return out


def contains_subsequence(tokens: Sequence[str], needle: Sequence[str]) -> bool:
    """True if ``needle`` occurs as a contiguous run inside ``tokens``."""
    n = len(needle)
    if n == 0:
        return False
    if n == 1:
        return needle[0] in tokens
    first = needle[0]
    for i in range(len(tokens) - n + 1):
        if tokens[i] == first and list(tokens[i:i + n]) == list(needle):
            return True
    return False
