"""File ingestion, validity filtering, GeoJSON output and synthetic data."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .geometry import METERS_PER_DEG
from .model import (
    BBox,
    GeometryError,
    GeoRecord,
    LineString,
    MultiPolygon,
    Point,
    Polygon,
)

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.PCG64"
TSV_FIELDS = (
    "photo_id", "title", "description", "tags", "taken_time",
    "uploaded_time", "lat", "lon", "user_id",
)
DEFAULT_NOISE_VOCAB = ("photo", "travel", "friends", "summer", "family", "nikon", "canon", "holiday")

__all__ = [
    "LayerFeature",
    "PolygonLayer",
    "LayerError",
    "Place",
    "SyntheticSpec",
    "SpecError",
    "parse_tsv",
    "format_tsv",
    "filter_valid",
    "read_features",
    "read_geojson_layer",
    "write_geojson",
    "geometry_to_geojson",
    "geometry_from_geojson",
    "generate_synthetic",
    "read_synthetic_spec",
]


# ---------------------------------------------------------------- TSV


def _parse_line(line: str) -> GeoRecord | None:
    parts = line.split("\t")
    if len(parts) != 9:
        return None
    pid, title, desc, tags, taken, uploaded, lat, lon, uid = parts
    try:
        lat_f = float(lat)
        lon_f = float(lon)
    except ValueError:
        return None
    pid, uid = pid.strip(), uid.strip()
    if not pid or not uid:
        return None
    tag_list = tuple(t.strip() for t in tags.split(",") if t.strip())
    return GeoRecord(pid, title, desc, tag_list, taken, uploaded, lat_f, lon_f, uid)


def parse_tsv(stream: IO[str] | Iterable[str]) -> tuple[list[GeoRecord], int]:
    """Parse 9-column photo records.

    Blank lines and ``#`` comment lines are ignored. Malformed lines are
    skipped, logged, and counted; the count is returned alongside the records.
    """
    records: list[GeoRecord] = []
    skipped = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        rec = _parse_line(line)
        if rec is None:
            skipped += 1
            logger.warning("skipping malformed TSV line %d", lineno)
            continue
        records.append(rec)
    return records, skipped


def format_tsv(records: Iterable[GeoRecord], metadata: Mapping[str, object] | None = None) -> str:
    lines = []
    if metadata:
        for key in sorted(metadata):
            lines.append(f"# {key}={metadata[key]}")
    for r in records:
        lines.append("\t".join([
            r.photo_id, r.title, r.description, ", ".join(r.tags),
            r.taken_time, r.uploaded_time, repr(float(r.lat)), repr(float(r.lon)), r.user_id,
        ]))
    return "".join(line + "\n" for line in lines)


def filter_valid(records: Iterable[GeoRecord], bbox: BBox | None = None) -> list[GeoRecord]:
    out = []
    for r in records:
        if not r.has_valid_coords:
            continue
        if bbox is not None and not bbox.contains(r.lon, r.lat):
            continue
        out.append(r)
    return out


# ---------------------------------------------------------------- GeoJSON


class LayerError(ValueError):
    """Structural problem with a polygon layer (duplicate or orphan keys)."""


@dataclass(frozen=True)
class LayerFeature:
    key: str
    polygon: Polygon
    attributes: Mapping[str, object]
    parent_key: str
    part: int | None = None


@dataclass
class PolygonLayer:
    """Join targets. Multipart features are split into ``key#i`` parts."""

    name: str
    key_field: str
    features: list[LayerFeature]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for f in self.features:
            if f.key in seen:
                raise LayerError(f"duplicate key {f.key!r} in layer {self.name!r}")
            seen.add(f.key)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def keys(self) -> list[str]:
        return [f.key for f in self.features]

    @property
    def parent_keys(self) -> list[str]:
        out: list[str] = []
        for f in self.features:
            if not out or out[-1] != f.parent_key:
                out.append(f.parent_key)
        return out

    @classmethod
    def from_polygons(cls, name: str, items: Iterable[tuple[str, Polygon]], key_field: str = "key") -> "PolygonLayer":
        feats = [LayerFeature(k, p, {key_field: k}, k) for k, p in items]
        return cls(name, key_field, feats)


def _ring(coords) -> tuple[tuple[float, float], ...]:
    ring = [(float(c[0]), float(c[1])) for c in coords]
    if ring and ring[0] != ring[-1]:
        ring.append(ring[0])
    return tuple(ring)


def geometry_from_geojson(geom: Mapping):
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if gtype == "Point":
        return Point(float(coords[0]), float(coords[1]))
    if gtype == "LineString":
        return LineString([(float(c[0]), float(c[1])) for c in coords])
    if gtype == "Polygon":
        return Polygon(_ring(coords[0]), tuple(_ring(h) for h in coords[1:]))
    if gtype == "MultiPolygon":
        return MultiPolygon(tuple(Polygon(_ring(p[0]), tuple(_ring(h) for h in p[1:])) for p in coords))
    raise GeometryError(f"unsupported geometry type {gtype!r}")


def _num(v: float):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def _ring_json(ring) -> list:
    return [[_num(x), _num(y)] for x, y in ring]


def geometry_to_geojson(geom) -> dict:
    if isinstance(geom, Point):
        return {"type": "Point", "coordinates": [_num(geom.lon), _num(geom.lat)]}
    if isinstance(geom, LineString):
        return {"type": "LineString", "coordinates": _ring_json(geom.coords)}
    if isinstance(geom, Polygon):
        return {"type": "Polygon", "coordinates": [_ring_json(geom.ring)] + [_ring_json(h) for h in geom.holes]}
    if isinstance(geom, MultiPolygon):
        return {
            "type": "MultiPolygon",
            "coordinates": [[_ring_json(p.ring)] + [_ring_json(h) for h in p.holes] for p in geom.parts],
        }
    if isinstance(geom, BBox):
        return geometry_to_geojson(Polygon([
            (geom.min_lon, geom.min_lat), (geom.max_lon, geom.min_lat),
            (geom.max_lon, geom.max_lat), (geom.min_lon, geom.max_lat),
            (geom.min_lon, geom.min_lat),
        ]))
    raise TypeError(f"cannot encode {type(geom).__name__}")


def _feature_list(doc) -> list:
    if isinstance(doc, dict) and doc.get("type") == "FeatureCollection":
        return list(doc.get("features", []))
    if isinstance(doc, dict) and doc.get("type") == "Feature":
        return [doc]
    raise ValueError("expected a GeoJSON FeatureCollection or Feature")


def _attributes(feat: Mapping) -> dict:
    # standard "properties", or a "fields" block on the feature or inside its geometry
    attrs: dict = {}
    geom = feat.get("geometry") or {}
    for block in (geom.get("fields") if isinstance(geom, dict) else None, feat.get("fields"), feat.get("properties")):
        if isinstance(block, dict):
            attrs.update(block)
    return attrs


def read_features(text: str) -> list[tuple[object, object, dict]]:
    """All features of a GeoJSON document as ``(id, geometry, attributes)``.

    Raises ``json.JSONDecodeError`` on invalid JSON.
    """
    doc = json.loads(text)
    out = []
    for feat in _feature_list(doc):
        out.append((feat.get("id"), geometry_from_geojson(feat.get("geometry") or {}), _attributes(feat)))
    return out


def read_geojson_layer(text: str, key_field: str, name: str = "layer") -> PolygonLayer:
    """Read polygon features keyed by ``key_field``.

    Non-polygon features and features lacking the key are skipped; their
    indices and reasons are kept in ``layer.rejected``. MultiPolygons become
    one layer feature per part, keyed ``key#0``, ``key#1``, ...
    """
    doc = json.loads(text)
    features: list[LayerFeature] = []
    rejected: list[tuple[int, str]] = []
    parents: set[str] = set()
    for idx, feat in enumerate(_feature_list(doc)):
        attrs = _attributes(feat)
        if key_field in attrs and attrs[key_field] is not None:
            key = str(attrs[key_field])
        elif key_field == "id" and feat.get("id") is not None:
            key = str(feat["id"])
        else:
            rejected.append((idx, f"missing key field {key_field!r}"))
            logger.warning("feature %d has no %r attribute; rejected", idx, key_field)
            continue
        try:
            geom = geometry_from_geojson(feat.get("geometry") or {})
        except (GeometryError, TypeError, IndexError, ValueError) as exc:
            rejected.append((idx, f"bad geometry: {exc}"))
            logger.warning("feature %d (%s): %s; skipped", idx, key, exc)
            continue
        if key in parents:
            raise LayerError(f"duplicate key {key!r}")
        if isinstance(geom, Polygon):
            parents.add(key)
            features.append(LayerFeature(key, geom, attrs, key))
        elif isinstance(geom, MultiPolygon):
            parents.add(key)
            for i, part in enumerate(geom.parts):
                features.append(LayerFeature(f"{key}#{i}", part, attrs, key, i))
        else:
            rejected.append((idx, f"non-polygon geometry {type(geom).__name__}"))
            logger.warning("feature %d (%s) is not a polygon; skipped", idx, key)
    return PolygonLayer(name, key_field, features, rejected)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (frozenset, set)):
        return sorted(v)
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def write_geojson(
    features: Iterable[tuple[object, object, Mapping[str, object]]],
    metadata: Mapping[str, object] | None = None,
) -> str:
    """Serialize ``(key, geometry, attributes)`` triples as a FeatureCollection.

    Feature order is preserved; property keys are sorted. ``metadata`` is
    written as a top-level foreign member.
    """
    out = []
    for key, geom, attrs in features:
        feat: dict = {"type": "Feature"}
        if key is not None:
            feat["id"] = key
        feat["geometry"] = geometry_to_geojson(geom)
        feat["properties"] = {k: _jsonable(attrs[k]) for k in sorted(attrs)}
        out.append(feat)
    doc: dict = {"type": "FeatureCollection"}
    if metadata:
        doc["metadata"] = _jsonable(dict(sorted(metadata.items())))
    doc["features"] = out
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


# ---------------------------------------------------------------- synthetic data


class SpecError(ValueError):
    def __init__(self, fields: Sequence[str], message: str | None = None):
        self.fields = list(fields)
        super().__init__(message or "invalid synthetic spec: " + ", ".join(self.fields))


@dataclass(frozen=True)
class Place:
    name: str
    lon: float
    lat: float
    spread_m: float
    n_points: int
    vocab: tuple[str, ...] = ()


@dataclass(frozen=True)
class SyntheticSpec:
    places: tuple[Place, ...] = ()
    n_noise: int = 0
    n_users: int = 1
    zipf_s: float = 1.0
    seed: int = 0
    bbox: BBox | None = None
    noise_vocab: tuple[str, ...] = DEFAULT_NOISE_VOCAB
    max_vocab_tags: int = 5

    def validate(self) -> None:
        bad = []
        for i, p in enumerate(self.places):
            if not p.name.strip():
                bad.append(f"places[{i}].name")
            if not (p.spread_m > 0 and math.isfinite(p.spread_m)):
                bad.append(f"places[{i}].spread_m")
            if p.n_points < 0:
                bad.append(f"places[{i}].n_points")
            if not (-90 <= p.lat <= 90 and -180 <= p.lon <= 180):
                bad.append(f"places[{i}].center")
        if self.n_noise < 0:
            bad.append("n_noise")
        if self.n_users < 1:
            bad.append("n_users")
        if not (self.zipf_s > 0 and math.isfinite(self.zipf_s)):
            bad.append("zipf_s")
        if self.seed < 0:
            bad.append("seed")
        if self.max_vocab_tags < 0:
            bad.append("max_vocab_tags")
        if self.n_noise > 0 and self.bbox is None and not self.places:
            bad.append("bbox")
        if bad:
            raise SpecError(bad)

    def covering_bbox(self) -> BBox:
        if self.bbox is not None:
            return self.bbox
        lons, lats = [], []
        for p in self.places:
            dlat = 3 * p.spread_m / METERS_PER_DEG
            dlon = 3 * p.spread_m / (METERS_PER_DEG * max(math.cos(math.radians(p.lat)), 1e-6))
            lons += [p.lon - dlon, p.lon + dlon]
            lats += [p.lat - dlat, p.lat + dlat]
        return BBox(max(min(lons), -180.0), max(min(lats), -90.0), min(max(lons), 180.0), min(max(lats), 90.0))


_EPOCH = datetime(2010, 1, 1, tzinfo=timezone.utc)
_SPAN_MIN = 2 * 365 * 24 * 60


def _fmt_time(ts: datetime) -> str:
    return f"{ts.month}/{ts.day}/{ts.year} {ts.hour}:{ts.minute:02d}"


def generate_synthetic(spec: SyntheticSpec) -> list[GeoRecord]:
    """Deterministic stand-in for a crawled photo collection.

    Place records scatter as an isotropic Gaussian (``spread_m`` meters)
    around the place center and carry the place name as a tag plus a sample
    of the place vocabulary. Noise records are uniform over the covering
    bbox. User ids follow a bounded Zipf law over ``n_users`` users.
    """
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    total = sum(p.n_points for p in spec.places) + spec.n_noise

    ranks = np.arange(1, spec.n_users + 1, dtype=float)
    weights = ranks ** (-spec.zipf_s)
    users = rng.choice(spec.n_users, size=total, p=weights / weights.sum()) + 1

    offsets = rng.integers(0, _SPAN_MIN, size=total)
    delays = rng.integers(0, 14 * 24 * 60, size=total)

    records: list[GeoRecord] = []

    def emit(lon: float, lat: float, tags: list[str], description: str) -> None:
        i = len(records)
        taken = _EPOCH + timedelta(minutes=int(offsets[i]))
        uploaded = taken + timedelta(minutes=int(delays[i]))
        records.append(GeoRecord(
            photo_id=str(5_000_000_000 + i),
            title=f"IMG_{i:06d}",
            description=description,
            tags=tuple(tags),
            taken_time=_fmt_time(taken),
            uploaded_time=_fmt_time(uploaded),
            lat=round(float(lat), 7),
            lon=round(float(lon), 7),
            user_id=str(10_000_000 + int(users[i])),
        ))

    for p in spec.places:
        sd_lat = p.spread_m / METERS_PER_DEG
        sd_lon = p.spread_m / (METERS_PER_DEG * math.cos(math.radians(p.lat)))
        dx = rng.standard_normal(p.n_points)
        dy = rng.standard_normal(p.n_points)
        vocab = list(p.vocab)
        for j in range(p.n_points):
            tags = [p.name]
            if vocab and spec.max_vocab_tags:
                n = int(rng.integers(1, min(spec.max_vocab_tags, len(vocab)) + 1))
                tags += [vocab[int(t)] for t in rng.choice(len(vocab), size=n, replace=False)]
            lat = min(max(p.lat + dy[j] * sd_lat, -90.0), 90.0)
            lon = min(max(p.lon + dx[j] * sd_lon, -180.0), 180.0)
            emit(lon, lat, tags, p.name)

    box = spec.covering_bbox()
    nlon = rng.uniform(box.min_lon, box.max_lon, spec.n_noise)
    nlat = rng.uniform(box.min_lat, box.max_lat, spec.n_noise)
    noise = list(spec.noise_vocab)
    for j in range(spec.n_noise):
        tags = []
        if noise:
            n = int(rng.integers(1, min(3, len(noise)) + 1))
            tags = [noise[int(t)] for t in rng.choice(len(noise), size=n, replace=False)]
        emit(nlon[j], nlat[j], tags, "")
    return records


def _csv_floats(value: str, n: int, key: str) -> list[float]:
    parts = [v.strip() for v in value.split(",")]
    if len(parts) != n:
        raise SpecError([key], f"{key}: expected {n} comma-separated numbers")
    try:
        return [float(v) for v in parts]
    except ValueError:
        raise SpecError([key], f"{key}: not a number") from None


def read_synthetic_spec(text: str) -> SyntheticSpec:
    """Parse the flat ``key = value`` spec format.

    Blocks are separated by blank lines. A block with a ``name`` key
    describes a place; any other block sets global options.
    """
    blocks: list[dict[str, str]] = []
    current: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if "=" not in line:
            raise SpecError([f"line {lineno}"], f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        current[key] = value
    if current:
        blocks.append(current)

    glob: dict[str, str] = {}
    places = []
    bad: list[str] = []
    for block in blocks:
        if "name" not in block:
            glob.update(block)
            continue
        try:
            lon, lat = _csv_floats(block.get("center", ""), 2, "center")
            places.append(Place(
                name=block["name"],
                lon=lon,
                lat=lat,
                spread_m=float(block.get("spread_m", "nan")),
                n_points=int(block.get("n_points", "-1")),
                vocab=tuple(v.strip() for v in block.get("vocab", "").split(",") if v.strip()),
            ))
        except SpecError as exc:
            bad += [f"{block['name']}.{f}" for f in exc.fields]
        except ValueError:
            bad.append(f"{block['name']}.spread_m/n_points")

    known = {"seed", "n_noise", "n_users", "zipf_s", "bbox", "noise_vocab", "max_vocab_tags"}
    bad += sorted(k for k in glob if k not in known)
    kwargs: dict = {}
    for key, conv in (("seed", int), ("n_noise", int), ("n_users", int), ("zipf_s", float), ("max_vocab_tags", int)):
        if key in glob:
            try:
                kwargs[key] = conv(glob[key])
            except ValueError:
                bad.append(key)
    if "bbox" in glob:
        try:
            kwargs["bbox"] = BBox(*_csv_floats(glob["bbox"], 4, "bbox"))
        except (SpecError, GeometryError):
            bad.append("bbox")
    if "noise_vocab" in glob:
        kwargs["noise_vocab"] = tuple(v.strip() for v in glob["noise_vocab"].split(",") if v.strip())
    if bad:
        raise SpecError(bad)
    spec = SyntheticSpec(places=tuple(places), **kwargs)
    spec.validate()
    return spec
