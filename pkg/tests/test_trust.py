import math
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from gazforge.geometry import Ellipse
from gazforge.model import BBox, GazetteerEntry, GeoRecord, Point
from gazforge.trust import (
    ReliabilityContext,
    TrustProfile,
    TrustThresholds,
    build_profiles,
    contribution_distribution,
    filter_entries,
    format_distribution_tsv,
    format_profiles_tsv,
    is_reliable,
    records_in_window,
    register_predicate,
    reputation,
    w_rank,
    w_rank_percentile,
)


def rec(pid, user, lon=0.0, lat=0.0, taken=""):
    return GeoRecord(str(pid), "", "", (), taken, "", lat, lon, user)


def entry(n_contributors, n_tags=10, name="e"):
    users = {f"u{i}" for i in range(n_contributors)}
    tags = [(f"t{i:02d}", 100 - i) for i in range(n_tags)]
    return GazetteerEntry(name, "landmark", Point(0, 0), tags, users, users, 81)


class TestScores:
    def test_w_rank(self):
        assert w_rank(7, 7) == 1.0
        assert w_rank(0, 7) == 0.0
        assert w_rank(9, 99) == pytest.approx(0.5, abs=1e-12)
        with pytest.raises(ValueError):
            w_rank(8, 7)
        with pytest.raises(ValueError):
            w_rank(0, 0)

    @given(st.integers(1, 10_000), st.data())
    def test_w_rank_increasing(self, n_max, data):
        a = data.draw(st.integers(0, n_max - 1))
        assert w_rank(a, n_max) < w_rank(a + 1, n_max) <= 1.0

    def test_reputation(self):
        assert reputation(8, 10, 0.5) == pytest.approx(0.4, abs=1e-12)
        assert reputation(10, 10, 0.3) == 0.3
        assert reputation(0, 10, 0.3) == 0.0
        with pytest.raises(ValueError):
            reputation(0, 0, 1.0)
        with pytest.raises(ValueError):
            reputation(11, 10, 1.0)

    def test_percentile(self):
        assert w_rank_percentile(5, [1, 5, 5, 9]) == 0.75
        with pytest.raises(ValueError):
            w_rank_percentile(1, [])


class TestReliability:
    def test_region(self):
        ctx = ReliabilityContext(region=BBox(0, 0, 1, 1))
        assert not is_reliable(rec(1, "u", 2, 2), ctx)
        assert is_reliable(rec(1, "u", 0.5, 0.5), ctx)

    def test_ellipse(self):
        e = Ellipse(Point(10, 10), 100.0, 50.0, 0.0, 2.0)
        ctx = ReliabilityContext(ellipse=e)
        assert is_reliable(rec(1, "u", 10, 10), ctx)
        assert not is_reliable(rec(1, "u", 10.1, 10), ctx)

    def test_range(self):
        assert not is_reliable(rec(1, "u", 0, 95))

    def test_outliers_flagged(self):
        from test_footprints import planted

        from gazforge.footprints import extract_point_entry
        from gazforge.geometry import Ellipse as E

        rs = planted()
        ent = extract_point_entry(rs, "c", "landmark")
        a = ent.attributes["ellipse"]
        ell = E(Point(*a["center"]), a["semi_major_m"], a["semi_minor_m"], a["theta_rad"], a["k"])
        flags = [is_reliable(r, ReliabilityContext(ellipse=ell)) for r in rs]
        assert flags[300:] == [False] * 10
        assert sum(flags[:300]) == len(ent.attributes["significant_ids"])

    def test_pluggable(self):
        register_predicate("never", lambda r, ctx: False)
        assert not is_reliable(rec(1, "u"), ReliabilityContext(predicate="never"))
        assert is_reliable(rec(1, "u", 0, 95), ReliabilityContext(predicate="range-only")) is False
        with pytest.raises(ValueError):
            is_reliable(rec(1, "u"), ReliabilityContext(predicate="missing"))


class TestProfiles:
    def test_empty(self):
        assert build_profiles([]) == []

    def test_single_user(self):
        (p,) = build_profiles([rec(i, "solo") for i in range(4)])
        assert p.reputation == 1.0

    def test_three_users(self):
        rs = [rec(i, "a") for i in range(9)] + [rec(10 + i, "b", 0, 95 if i == 0 else 0) for i in range(3)] + [rec(20, "c")]
        ps = build_profiles(rs)
        assert [p.user_id for p in ps] == ["a", "b", "c"]
        a, b, c = ps
        assert (a.n_total, a.n_reliable, a.w_rank, a.reputation) == (9, 9, 1.0, 1.0)
        assert b.w_rank == pytest.approx(math.log(4) / math.log(10), abs=1e-12)
        assert b.reputation == pytest.approx(2 / 3 * math.log(4) / math.log(10), abs=1e-12)
        assert c.reputation == pytest.approx(math.log(2) / math.log(10), abs=1e-12)

    def test_sort_tie_by_user(self):
        ps = build_profiles([rec(1, "z"), rec(2, "a")])
        assert [p.user_id for p in ps] == ["a", "z"]

    @given(st.lists(st.tuples(st.sampled_from("abcdef"), st.floats(-100, 100)), min_size=1, max_size=60),
           st.sampled_from(["log", "percentile"]))
    def test_bounds(self, rows, scheme):
        rs = [rec(i, u, 0, lat) for i, (u, lat) in enumerate(rows)]
        for p in build_profiles(rs, w_scheme=scheme):
            assert 0 <= p.reputation <= p.w_rank <= 1

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            TrustProfile("u", 1, 2, 1.0, 1.0)


class TestFilter:
    def test_unknown_users_count_as_trusted(self):
        # unknown users have reputation 0, which meets the default min_reputation of 0
        acc, rej = filter_entries([entry(22)], [])
        assert rej == [] and len(acc[0].trusted_contributors) == 22

    def test_bottom_line_boundary(self):
        acc, rej = filter_entries([entry(14, name="a"), entry(15, name="b")], [])
        assert [e.name for e in acc] == ["b"]
        assert [(e.name, r) for e, r in rej] == [("a", ["min_contributors"])]

    def test_min_tags(self):
        _, rej = filter_entries([entry(30, n_tags=9)], [])
        assert rej[0][1] == ["min_tags"]

    def test_zero_thresholds(self):
        es = [entry(0, 0, "a"), entry(3, 2, "b")]
        acc, rej = filter_entries(es, [], TrustThresholds(0, 0, 0))
        assert [e.name for e in acc] == ["a", "b"] and rej == []

    def test_min_reputation(self):
        e = entry(15)
        profiles = [TrustProfile(u, 10, 5 if u == "u0" else 10, 1.0, 0.5 if u == "u0" else 1.0) for u in e.contributors]
        acc, rej = filter_entries([e], profiles, TrustThresholds(15, 10, 0.9))
        assert rej[0][1] == ["min_contributors"] and len(rej[0][0].trusted_contributors) == 14

    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 15)), max_size=12),
           st.integers(0, 30), st.integers(0, 15), st.integers(0, 5), st.integers(0, 5))
    def test_partition_and_monotone(self, shapes, mc, mt, dc, dt):
        es = [entry(c, t, f"e{i}") for i, (c, t) in enumerate(shapes)]
        acc, rej = filter_entries(es, [], TrustThresholds(mc, mt))
        names = [e.name for e in acc] + [e.name for e, _ in rej]
        assert sorted(names) == sorted(e.name for e in es)
        assert len(set(names)) == len(names)
        acc2, _ = filter_entries(es, [], TrustThresholds(mc + dc, mt + dt))
        assert {e.name for e in acc2} <= {e.name for e in acc}

    def test_thresholds_validation(self):
        with pytest.raises(ValueError):
            TrustThresholds(-1)
        with pytest.raises(ValueError):
            TrustThresholds(min_reputation=1.5)


class TestDistribution:
    def test_exact_power_law(self):
        d = contribution_distribution([1000 / r for r in range(1, 101)])
        assert d.slope == pytest.approx(-1.0, abs=0.01)
        assert contribution_distribution([round(1000 / r) for r in range(1, 101)]).slope == pytest.approx(-1.0, abs=0.01)

    def test_flat(self):
        assert contribution_distribution([5, 5, 5, 5]).slope == pytest.approx(0.0, abs=1e-12)

    def test_single(self):
        d = contribution_distribution([3])
        assert d.slope is None and d.summary() == "slope=undefined gt10_fraction=0.000000"

    def test_fraction(self):
        assert contribution_distribution([11, 10, 50, 1]).gt10_fraction == 0.5

    @given(st.lists(st.integers(1, 500), min_size=2, max_size=40), st.integers(2, 50))
    def test_scale_invariant(self, counts, f):
        a = contribution_distribution(counts).slope
        b = contribution_distribution([c * f for c in counts]).slope
        assert a == pytest.approx(b, abs=1e-9)

    def test_tsv(self):
        ps = [TrustProfile("a", 3, 2, 1.0, 2 / 3)]
        assert format_profiles_tsv(ps) == "a\t3\t2\t1.000000\t0.666667\n"
        assert format_distribution_tsv(contribution_distribution([4, 2])).splitlines()[:2] == ["1\t4", "2\t2"]


def test_time_window():
    rs = [rec(1, "a", taken="1/1/2010 0:00"), rec(2, "a", taken="6/1/2011 0:00"), rec(3, "a", taken="junk")]
    got = records_in_window(rs, datetime(2011, 1, 1, tzinfo=timezone.utc))
    assert [r.photo_id for r in got] == ["2"]
    assert records_in_window(rs) == rs
