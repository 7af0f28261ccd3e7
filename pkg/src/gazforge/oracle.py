"""Sequential reference implementations.

These deliberately share no code path with the MapReduce jobs: no
partitioning, no engine, a different candidate filter, and winding-number
containment instead of ray-crossing parity.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .ingest import PolygonLayer
from .model import GeoRecord, contains_subsequence, record_tokens, tokenize


def winding_contains(x: np.ndarray, y: np.ndarray, ring) -> np.ndarray:
    """Boundary-inclusive containment by winding number."""
    wn = np.zeros(x.shape, dtype=np.int64)
    on_edge = np.zeros(x.shape, dtype=bool)
    for i in range(len(ring) - 1):
        x1, y1 = ring[i]
        x2, y2 = ring[i + 1]
        is_left = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        on_edge |= (
            (is_left == 0)
            & (np.minimum(x1, x2) <= x) & (x <= np.maximum(x1, x2))
            & (np.minimum(y1, y2) <= y) & (y <= np.maximum(y1, y2))
        )
        up = (y1 <= y) & (y2 > y) & (is_left > 0)
        down = (y1 > y) & (y2 <= y) & (is_left < 0)
        wn += up.astype(np.int64) - down.astype(np.int64)
    return (wn != 0) | on_edge


def sequential_spatial_join(lon, lat, layer: PolygonLayer, ids: Sequence[str] | None = None):
    """Per-key counts (and sorted ids) over all points, one polygon at a time.

    Returns ``(counts, ids_by_key)`` with zero-count keys omitted, matching
    the raw reduce output of the job.
    """
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    counts: dict[str, int] = {}
    id_map: dict[str, list[str]] = {}
    for feat in layer.features:
        ring = feat.polygon.ring
        xs = [c[0] for c in ring]
        ys = [c[1] for c in ring]
        cand = np.nonzero((lon >= min(xs)) & (lon <= max(xs)) & (lat >= min(ys)) & (lat <= max(ys)))[0]
        inside = cand[winding_contains(lon[cand], lat[cand], ring)]
        if len(inside):
            counts[feat.key] = int(len(inside))
            if ids is not None:
                id_map[feat.key] = sorted(ids[i] for i in inside)
    return counts, (id_map if ids is not None else None)


def brute_cooccurrence(
    records: Sequence[GeoRecord], place_name: str, exclude_place: bool = True,
    fields: Sequence[str] = ("tags", "title"),
) -> dict[str, int]:
    """Double loop over vocabulary and rows, emitting 1 per (token, row)
    where both the token and the place occur."""
    place = tokenize(place_name)
    rows = [record_tokens(r, fields) for r in records]
    row_sets = [set(t) for t in rows]
    has_place = [contains_subsequence(t, place) for t in rows]
    vocab = sorted({t for s in row_sets for t in s})
    out: dict[str, int] = {}
    for token in vocab:
        if exclude_place and token in place:
            continue
        freq = 0
        for tokens, flag in zip(row_sets, has_place):
            if flag and token in tokens:
                freq += 1
        if freq:
            out[token] = freq
    return out
