"""Tag co-occurrence and spatial-join jobs, keyword type extraction,
and the per-layer summary table."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from functools import partial
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import points_in_ring
from .ingest import LayerError, PolygonLayer
from .mapreduce import DEFAULT_BLOCK_SIZE, KeyedCounts, run_job, split, sum_reducer
from .model import GeoRecord, MultiPolygon, contains_subsequence, record_tokens, tokenize

__all__ = [
    "DEFAULT_LEXICON",
    "PointBatch",
    "SummaryRow",
    "parse_lexicon",
    "cooccurrence_job",
    "tag_frequency_job",
    "rank_tags",
    "spatial_join_job",
    "join_back",
    "extract_by_type",
    "matching_records",
    "multiscale_summary",
    "format_summary_tsv",
]

# Keywords column of the place-type table, shipped as printed.
DEFAULT_LEXICON: dict[str, tuple[str, ...]] = {
    "parks": ("park", "公园", "parc", "parquet"),
    "schools": ("school", "university"),
    "museums": ("museum",),
    "coffee shops": ("coffee", "cafe", "coffeehouse", "coffeebar", "starbucks"),
    "streets": ("street", "road", "blvd", "freeway", "highway"),
    "rivers": ("river", "watershed"),
}


def parse_lexicon(text: str) -> dict[str, tuple[str, ...]]:
    """Read ``type: kw1, kw2, ...`` lines (``#`` comments allowed)."""
    out: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ValueError(f"lexicon line {lineno}: expected 'type: keyword, ...'")
        name, kws = line.split(":", 1)
        words = tuple(w for k in kws.split(",") for w in tokenize(k))
        if not words:
            raise ValueError(f"lexicon line {lineno}: type {name.strip()!r} has no keywords")
        out[name.strip()] = words
    return out


# ---------------------------------------------------------------- co-occurrence


def _cooc_mapper(record: GeoRecord, place: tuple[str, ...], exclude: frozenset, fields: tuple[str, ...]):
    tokens = record_tokens(record, fields)
    if not contains_subsequence(tokens, place):
        return []
    return [(t, 1) for t in sorted(set(tokens) - exclude)]


def cooccurrence_job(
    records: Sequence[GeoRecord],
    place_name: str,
    workers: int = 1,
    *,
    exclude_place: bool = True,
    block_size: int = DEFAULT_BLOCK_SIZE,
    fields: Sequence[str] = ("tags", "title"),
) -> KeyedCounts:
    """Count, per token, the records that mention both the token and the place.

    A record mentions the place when the place name's tokens occur as a
    contiguous run in its tag+title tokens. Each record adds at most 1 per
    token. With ``exclude_place`` the place name's own tokens are dropped
    from the result; without it this is plain tag frequency over the
    matching records.
    """
    place = tuple(tokenize(place_name))
    if not place:
        raise ValueError("place_name must contain at least one token")
    exclude = frozenset(place) if exclude_place else frozenset()
    mapper = partial(_cooc_mapper, place=place, exclude=exclude, fields=tuple(fields))
    return run_job(split(list(records), block_size), mapper, sum_reducer, workers)


def _freq_mapper(record: GeoRecord, fields: tuple[str, ...]):
    return [(t, 1) for t in sorted(set(record_tokens(record, fields)))]


def tag_frequency_job(
    records: Sequence[GeoRecord],
    workers: int = 1,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    fields: Sequence[str] = ("tags", "title"),
) -> KeyedCounts:
    """Number of records carrying each token (no place filter)."""
    mapper = partial(_freq_mapper, fields=tuple(fields))
    return run_job(split(list(records), block_size), mapper, sum_reducer, workers)


def rank_tags(counts: KeyedCounts | Mapping[str, int], k: int) -> list[tuple[str, int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    items = counts.counts if isinstance(counts, KeyedCounts) else counts
    return sorted(items.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


# ---------------------------------------------------------------- spatial join


@dataclass(frozen=True)
class PointBatch:
    """Column-oriented points: lon, lat and optional ids. Sliceable."""

    lon: np.ndarray
    lat: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        lon = np.ascontiguousarray(self.lon, dtype=float)
        lat = np.ascontiguousarray(self.lat, dtype=float)
        if lon.shape != lat.shape or lon.ndim != 1:
            raise ValueError("lon and lat must be 1-d arrays of equal length")
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)
        if self.ids is not None:
            ids = np.asarray(self.ids, dtype=object)
            if ids.shape != lon.shape:
                raise ValueError("ids must match lon/lat length")
            object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.lon)

    def __getitem__(self, sl: slice) -> "PointBatch":
        return PointBatch(self.lon[sl], self.lat[sl], None if self.ids is None else self.ids[sl])

    @classmethod
    def from_records(cls, records: Sequence[GeoRecord], with_ids: bool = True) -> "PointBatch":
        lon = np.fromiter((r.lon for r in records), dtype=float, count=len(records))
        lat = np.fromiter((r.lat for r in records), dtype=float, count=len(records))
        ids = np.array([r.photo_id for r in records], dtype=object) if with_ids else None
        return cls(lon, lat, ids)


# rings up to this many vertices are tested together in one padded array
SMALL_RING = 32
# (point, polygon) pairs tested per vectorized pass
PAIR_CHUNK = 1 << 15
# polygons with at least this many candidate points get their own pass
DENSE_PAIRS = 64


class PreparedLayer:
    """Polygon rings plus a uniform-grid index over their bounding boxes.

    Built once per job and shared (read-only) by every mapper.
    """

    def __init__(self, layer: PolygonLayer, cells_per_polygon: float = 1.0):
        self.keys = [f.key for f in layer.features]
        self.rings = [f.polygon.ring for f in layer.features]
        n = len(self.rings)
        bb = np.array([[min(x for x, _ in r), min(y for _, y in r), max(x for x, _ in r), max(y for _, y in r)]
                       for r in self.rings], dtype=float).reshape(n, 4)
        self.bbox = bb
        self.x0, self.y0 = float(bb[:, 0].min()), float(bb[:, 1].min())
        x1, y1 = float(bb[:, 2].max()), float(bb[:, 3].max())
        g = max(1, int(math.ceil(math.sqrt(n * cells_per_polygon))))
        self.gx = self.gy = g
        self.dx = (x1 - self.x0) / g or 1.0
        self.dy = (y1 - self.y0) / g or 1.0

        cx0, cy0 = self._cell(bb[:, 0], bb[:, 1])
        cx1, cy1 = self._cell(bb[:, 2], bb[:, 3])
        cells: list[list[int]] = [[] for _ in range(g * g)]
        for pid in range(n):
            for cy in range(cy0[pid], cy1[pid] + 1):
                row = cy * g
                for cx in range(cx0[pid], cx1[pid] + 1):
                    cells[row + cx].append(pid)
        self.cell_start = np.zeros(g * g + 1, dtype=np.int64)
        self.cell_start[1:] = np.cumsum([len(c) for c in cells])
        self.cell_polys = np.fromiter((p for c in cells for p in c), dtype=np.int64, count=int(self.cell_start[-1]))

        lengths = np.array([len(r) for r in self.rings], dtype=np.int64)
        self.small = lengths <= SMALL_RING
        vmax = int(lengths[self.small].max()) if self.small.any() else 2
        # vertex-major so each edge's gathered coordinates are contiguous
        self.rx = np.zeros((vmax, n))
        self.ry = np.zeros((vmax, n))
        for pid in np.nonzero(self.small)[0]:
            ring = self.rings[pid]
            pad = [ring[-1]] * (vmax - len(ring))
            xs, ys = zip(*(list(ring) + pad))
            self.rx[:, pid] = xs
            self.ry[:, pid] = ys
        self.nverts = lengths

    def _cell(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        cx = np.clip(np.floor((x - self.x0) / self.dx), 0, self.gx - 1).astype(np.int64)
        cy = np.clip(np.floor((y - self.y0) / self.dy), 0, self.gy - 1).astype(np.int64)
        return cx, cy

    def candidates(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(point index, polygon id) pairs whose bbox holds the point."""
        ok = np.nonzero(np.isfinite(x) & np.isfinite(y))[0]
        cx, cy = self._cell(x[ok], y[ok])
        cell = cy * self.gx + cx
        start = self.cell_start[cell]
        count = self.cell_start[cell + 1] - start
        total = int(count.sum())
        pt = np.repeat(ok, count)
        offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(count) - count, count) + np.repeat(start, count)
        poly = self.cell_polys[offs]
        b = self.bbox[poly]
        px, py = x[pt], y[pt]
        keep = (px >= b[:, 0]) & (px <= b[:, 2]) & (py >= b[:, 1]) & (py <= b[:, 3])
        return pt[keep], poly[keep]

    def _contains_small(self, px: np.ndarray, py: np.ndarray, poly: np.ndarray) -> np.ndarray:
        # only as many edges as the longest ring in this chunk
        nv = int(self.nverts[poly].max())
        rx, ry = self.rx[:nv, poly], self.ry[:nv, poly]
        inside = np.zeros(len(poly), dtype=bool)
        on_edge = np.zeros(len(poly), dtype=bool)
        for v in range(nv - 1):
            x1, y1, x2, y2 = rx[v], ry[v], rx[v + 1], ry[v + 1]
            cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            zero = np.flatnonzero(cross == 0)
            if len(zero):
                a1, b1, a2, b2, xz, yz = x1[zero], y1[zero], x2[zero], y2[zero], px[zero], py[zero]
                on_edge[zero] |= (
                    (xz >= np.minimum(a1, a2)) & (xz <= np.maximum(a1, a2))
                    & (yz >= np.minimum(b1, b2)) & (yz <= np.maximum(b1, b2))
                )
            inside ^= ((y1 > py) != (y2 > py)) & ((cross > 0) == (y2 > y1))
        return inside | on_edge

    def contains_pairs(self, x: np.ndarray, y: np.ndarray, pt: np.ndarray, poly: np.ndarray) -> np.ndarray:
        """Boundary-inclusive containment for each (point, polygon) pair.

        Polygons with many candidate points, or long rings, are tested one at
        a time against scalar vertices; the sparse remainder is tested in
        gathered batches sorted by ring length.
        """
        result = np.zeros(len(pt), dtype=bool)
        if not len(pt):
            return result
        per_poly = np.bincount(poly, minlength=len(self.keys))
        dense = (per_poly >= DENSE_PAIRS) | ~self.small
        is_dense = dense[poly]

        sparse = np.flatnonzero(~is_dense)
        if len(sparse):
            sparse = sparse[np.argsort(self.nverts[poly[sparse]], kind="stable")]
            for lo in range(0, len(sparse), PAIR_CHUNK):
                sel = sparse[lo:lo + PAIR_CHUNK]
                result[sel] = self._contains_small(x[pt[sel]], y[pt[sel]], poly[sel])

        grouped = np.flatnonzero(is_dense)
        if len(grouped):
            order = grouped[np.argsort(poly[grouped], kind="stable")]
            bounds = np.flatnonzero(np.diff(poly[order])) + 1
            for group in np.split(order, bounds):
                ring = self.rings[int(poly[group[0]])]
                result[group] = points_in_ring(x[pt[group]], y[pt[group]], ring)
        return result


def _join_block(batch: PointBatch, layer: PreparedLayer, collect_ids: bool):
    pt, poly = layer.candidates(batch.lon, batch.lat)
    hit = layer.contains_pairs(batch.lon, batch.lat, pt, poly)
    pt, poly = pt[hit], poly[hit]
    counts = np.bincount(poly, minlength=len(layer.keys))
    nonzero = np.nonzero(counts)[0]
    if not collect_ids:
        return [(layer.keys[i], int(counts[i])) for i in nonzero]
    order = np.argsort(poly, kind="stable")
    groups = np.split(pt[order], np.cumsum(counts[nonzero])[:-1])
    return [(layer.keys[i], (int(counts[i]), batch.ids[g].tolist())) for i, g in zip(nonzero, groups)]


def _join_reducer(key: str, values: list):
    if values and isinstance(values[0], tuple):
        ids: list[str] = []
        for _, block_ids in values:
            ids.extend(block_ids)
        return sum(c for c, _ in values), sorted(ids)
    return sum(values)


def spatial_join_job(
    points: Sequence[GeoRecord] | PointBatch,
    layer: PolygonLayer,
    collect_ids: bool = False,
    workers: int = 1,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> KeyedCounts:
    """Count points inside each layer polygon (boundary inclusive).

    The full layer goes to every mapper; only the points are partitioned.
    Polygons that receive no points are absent from the result.
    """
    if len(layer) == 0:
        raise ValueError("layer has no features")
    batch = points if isinstance(points, PointBatch) else PointBatch.from_records(points, with_ids=collect_ids)
    if collect_ids and batch.ids is None:
        raise ValueError("collect_ids requires point ids")
    mapper = partial(_join_block, layer=PreparedLayer(layer), collect_ids=collect_ids)
    out = run_job(split(batch, block_size), mapper, _join_reducer, workers, block_mapper=True)
    if collect_ids and out.ids is None:
        out = KeyedCounts(out.counts, {})
    return out


def join_back(layer: PolygonLayer, counts: KeyedCounts) -> list[tuple[str, object, dict]]:
    """Attach counts to the layer's features, one output row per source feature.

    Multipart counts are summed back under the parent key and the parts are
    re-assembled into a MultiPolygon.
    """
    parent_of = {f.key: f.parent_key for f in layer.features}
    for key in counts.counts:
        if key not in parent_of:
            raise LayerError(f"count key {key!r} matches no layer feature")

    rows: dict[str, dict] = {}
    for f in layer.features:
        row = rows.setdefault(
            f.parent_key, {"attrs": dict(f.attributes), "parts": [], "multi": f.part is not None, "count": 0, "ids": []}
        )
        row["parts"].append(f.polygon)
        row["count"] += counts.get(f.key, 0)
        if counts.ids is not None:
            row["ids"].extend(counts.ids.get(f.key, ()))

    out = []
    for key, row in rows.items():
        attrs = row["attrs"]
        attrs["count"] = row["count"]
        if counts.ids is not None:
            attrs["point_ids"] = sorted(row["ids"])
        geom = MultiPolygon(tuple(row["parts"])) if row["multi"] else row["parts"][0]
        out.append((key, geom, attrs))
    return out


# ---------------------------------------------------------------- type extraction


def matching_records(
    records: Iterable[GeoRecord], name: str, fields: Sequence[str] = ("tags", "title")
) -> list[GeoRecord]:
    """Records whose tag+title tokens contain ``name`` as a contiguous run."""
    needle = tokenize(name)
    if not needle:
        raise ValueError("name must contain at least one token")
    return [r for r in records if contains_subsequence(record_tokens(r, fields), needle)]


def extract_by_type(
    records: Iterable[GeoRecord],
    lexicon_entry: tuple[str, Sequence[str]],
    fields: Sequence[str] = ("tags", "title"),
) -> list[GeoRecord]:
    """Records with at least one whole-token keyword hit."""
    _, keywords = lexicon_entry
    kw = {t for k in keywords for t in tokenize(k)}
    if not kw:
        raise ValueError("keyword list is empty")
    return [r for r in records if not kw.isdisjoint(record_tokens(r, fields))]


# ---------------------------------------------------------------- summary


@dataclass(frozen=True)
class SummaryRow:
    feature_type: str
    layer: str
    records: int
    joined: int
    units_hit: int
    mean_per_unit: int


def _round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def multiscale_summary(
    points: Sequence[GeoRecord] | PointBatch,
    layers: Sequence[PolygonLayer],
    workers: int = 1,
    *,
    feature_type: str = "",
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> list[SummaryRow]:
    """Per layer: joined total, units with a nonzero count, and the rounded
    mean count over those units (0 when none are hit)."""
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        raise ValueError("layer names must be unique")
    rows = []
    for layer in layers:
        counts = spatial_join_job(points, layer, False, workers, block_size=block_size)
        per_unit = [a["count"] for _, _, a in join_back(layer, counts)]
        hit = [c for c in per_unit if c > 0]
        mean = _round_half_up(sum(hit) / len(hit)) if hit else 0
        rows.append(SummaryRow(feature_type, layer.name, len(points), sum(per_unit), len(hit), mean))
    return rows


def format_summary_tsv(rows: Sequence[SummaryRow], keywords: Mapping[str, Sequence[str]] | None = None) -> str:
    """One line per feature type, one column per layer, in the
    ``<mean> per unit <hit> units`` style of the place-type table."""
    layers: list[str] = []
    by_type: dict[str, dict[str, SummaryRow]] = {}
    for r in rows:
        if r.layer not in layers:
            layers.append(r.layer)
        by_type.setdefault(r.feature_type, {})[r.layer] = r
    lines = ["\t".join(["feature_type", "keywords", "records"] + layers)]
    for ftype, cells in by_type.items():
        kws = ", ".join((keywords or {}).get(ftype, ()))
        n = next(iter(cells.values())).records
        cols = [f"{cells[l].mean_per_unit} per unit {cells[l].units_hit} units" if l in cells else "" for l in layers]
        lines.append("\t".join([ftype, kws, str(n)] + cols))
    return "".join(line + "\n" for line in lines)
