"""Contributor reputation and bottom-line filtering of gazetteer entries."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .geometry import Ellipse, point_in_ellipse
from .model import BBox, GazetteerEntry, GeoRecord

__all__ = [
    "TrustProfile",
    "TrustThresholds",
    "ReliabilityContext",
    "ContributionDistribution",
    "w_rank",
    "w_rank_percentile",
    "reputation",
    "is_reliable",
    "register_predicate",
    "RELIABILITY_PREDICATES",
    "build_profiles",
    "filter_entries",
    "contribution_distribution",
    "records_in_window",
    "format_profiles_tsv",
    "format_distribution_tsv",
]


@dataclass(frozen=True)
class TrustProfile:
    user_id: str
    n_total: int
    n_reliable: int
    w_rank: float
    reputation: float

    def __post_init__(self):
        if not 0 <= self.n_reliable <= self.n_total:
            raise ValueError(f"{self.user_id}: need 0 <= n_reliable <= n_total")


@dataclass(frozen=True)
class TrustThresholds:
    min_contributors: int = 15
    min_tags: int = 10
    min_reputation: float = 0.0

    def __post_init__(self):
        if self.min_contributors < 0 or self.min_tags < 0:
            raise ValueError("thresholds must be non-negative")
        if not 0 <= self.min_reputation <= 1:
            raise ValueError("min_reputation must lie in [0, 1]")


def w_rank(n_i: int, n_max: int) -> float:
    """log(1 + n_i) / log(1 + n_max): 0 for no uploads, 1 for the top uploader."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_i < 0 or n_i > n_max:
        raise ValueError(f"n_i={n_i} outside [0, n_max={n_max}]")
    return math.log1p(n_i) / math.log1p(n_max)


def w_rank_percentile(n_i: int, all_counts: Sequence[int]) -> float:
    """Share of users with at most ``n_i`` uploads."""
    if not all_counts:
        raise ValueError("no users")
    ordered = sorted(all_counts)
    return bisect_right(ordered, n_i) / len(ordered)


def reputation(n_reliable: int, n_total: int, w: float) -> float:
    if n_total == 0:
        raise ValueError("user has no contributions; reputation undefined")
    if not 0 <= n_reliable <= n_total:
        raise ValueError(f"n_reliable={n_reliable} outside [0, n_total={n_total}]")
    return n_reliable / n_total * w


@dataclass(frozen=True)
class ReliabilityContext:
    region: BBox | None = None
    ellipse: Ellipse | None = None
    predicate: str = "default"


def _default_reliable(record: GeoRecord, ctx: ReliabilityContext) -> bool:
    if not record.has_valid_coords:
        return False
    if ctx.region is not None and not ctx.region.contains(record.lon, record.lat):
        return False
    if ctx.ellipse is not None and not point_in_ellipse((record.lon, record.lat), ctx.ellipse):
        return False
    return True


RELIABILITY_PREDICATES: dict[str, Callable[[GeoRecord, ReliabilityContext], bool]] = {
    "default": _default_reliable,
    "range-only": lambda r, ctx: r.has_valid_coords,
}


def register_predicate(name: str, fn: Callable[[GeoRecord, ReliabilityContext], bool]) -> None:
    RELIABILITY_PREDICATES[name] = fn


def is_reliable(record: GeoRecord, context: ReliabilityContext | None = None) -> bool:
    ctx = context or ReliabilityContext()
    try:
        fn = RELIABILITY_PREDICATES[ctx.predicate]
    except KeyError:
        raise ValueError(f"unknown reliability predicate {ctx.predicate!r}") from None
    return bool(fn(record, ctx))


WRankFn = Callable[[int, Sequence[int]], float]

W_RANK_SCHEMES: dict[str, WRankFn] = {
    "log": lambda n, counts: w_rank(n, max(max(counts), 1)),
    "percentile": w_rank_percentile,
}


def build_profiles(
    records: Iterable[GeoRecord],
    context: ReliabilityContext | None = None,
    w_scheme: str = "log",
) -> list[TrustProfile]:
    """One profile per user, sorted by upload count desc then user id."""
    totals: dict[str, int] = {}
    reliable: dict[str, int] = {}
    for r in records:
        totals[r.user_id] = totals.get(r.user_id, 0) + 1
        if is_reliable(r, context):
            reliable[r.user_id] = reliable.get(r.user_id, 0) + 1
    if not totals:
        return []
    wfn = W_RANK_SCHEMES[w_scheme]
    counts = list(totals.values())
    out = []
    for uid, n in totals.items():
        w = wfn(n, counts)
        nr = reliable.get(uid, 0)
        out.append(TrustProfile(uid, n, nr, w, reputation(nr, n, w)))
    out.sort(key=lambda p: (-p.n_total, p.user_id))
    return out


def filter_entries(
    entries: Sequence[GazetteerEntry],
    profiles: Sequence[TrustProfile] | Mapping[str, TrustProfile],
    t: TrustThresholds = TrustThresholds(),
) -> tuple[list[GazetteerEntry], list[tuple[GazetteerEntry, list[str]]]]:
    """Split entries into accepted and rejected-with-reasons.

    Trusted contributors are those whose reputation reaches
    ``min_reputation``; users without a profile count as reputation 0.
    Accepted entries carry their recomputed ``trusted_contributors``.
    """
    by_user = profiles if isinstance(profiles, Mapping) else {p.user_id: p for p in profiles}
    accepted, rejected = [], []
    for e in entries:
        trusted = frozenset(
            u for u in e.contributors
            if (by_user[u].reputation if u in by_user else 0.0) >= t.min_reputation
        )
        reasons = []
        if len(trusted) < t.min_contributors:
            reasons.append("min_contributors")
        if len({tok for tok, _ in e.top_tags}) < t.min_tags:
            reasons.append("min_tags")
        updated = GazetteerEntry(
            e.name, e.feature_type, e.footprint, e.top_tags, e.contributors, trusted, e.n_points, e.attributes
        )
        if reasons:
            rejected.append((updated, reasons))
        else:
            accepted.append(updated)
    return accepted, rejected


@dataclass(frozen=True)
class ContributionDistribution:
    table: tuple[tuple[int, float], ...]
    slope: float | None
    gt10_fraction: float

    def summary(self) -> str:
        slope = "undefined" if self.slope is None else f"{self.slope:.6f}"
        return f"slope={slope} gt10_fraction={self.gt10_fraction:.6f}"


def contribution_distribution(profiles: Sequence[TrustProfile] | Sequence[float]) -> ContributionDistribution:
    """Rank-frequency table, least-squares log-log slope, share of users with
    more than 10 uploads. Accepts profiles or bare (possibly fractional) counts."""
    counts = sorted((p.n_total if isinstance(p, TrustProfile) else p for p in profiles), reverse=True)
    table = tuple((rank, c) for rank, c in enumerate(counts, 1))
    frac = sum(1 for c in counts if c > 10) / len(counts) if counts else 0.0
    pos = [(r, c) for r, c in table if c > 0]
    slope = None
    if len(pos) >= 2:
        x = np.log([r for r, _ in pos])
        y = np.log([c for _, c in pos])
        slope = float(np.polyfit(x, y, 1)[0])
    return ContributionDistribution(table, slope, frac)


def records_in_window(records: Iterable[GeoRecord], start: datetime | None = None, end: datetime | None = None) -> list[GeoRecord]:
    """Records taken within [start, end). Unparseable timestamps are dropped
    whenever a bound is given."""
    if start is None and end is None:
        return list(records)
    out = []
    for r in records:
        ts = r.taken_at
        if ts is None:
            continue
        if start is not None and ts < start:
            continue
        if end is not None and ts >= end:
            continue
        out.append(r)
    return out


def format_profiles_tsv(profiles: Sequence[TrustProfile]) -> str:
    return "".join(
        f"{p.user_id}\t{p.n_total}\t{p.n_reliable}\t{p.w_rank:.6f}\t{p.reputation:.6f}\n" for p in profiles
    )


def format_distribution_tsv(dist: ContributionDistribution) -> str:
    rows = "".join(f"{rank}\t{count}\n" for rank, count in dist.table)
    return rows + dist.summary() + "\n"
