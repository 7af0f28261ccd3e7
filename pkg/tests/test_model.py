from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from gazforge.model import (
    BBox,
    GazetteerEntry,
    GeoRecord,
    GeometryError,
    LineString,
    MultiPolygon,
    Point,
    Polygon,
    contains_subsequence,
    parse_timestamp,
    record_tokens,
    tokenize,
)
from reference import ref_tokenize


def rec(**kw):
    base = dict(photo_id="1", title="", description="", tags=(), taken_time="", uploaded_time="",
                lat=0.0, lon=0.0, user_id="u")
    base.update(kw)
    return GeoRecord(**base)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_sample_tags(self):
        assert tokenize("California, CA, trip, sea") == ["california", "ca", "trip", "sea"]

    def test_non_ascii_and_punct(self):
        assert tokenize("公园 Park!") == ["公园", "park"]

    def test_inner_punctuation_kept(self):
        assert tokenize("st.-louis") == ["st.-louis"]
        assert tokenize("(o'hare)") == ["o'hare"]

    def test_non_ascii_letters_not_lowercased(self):
        assert tokenize("ÉCOLE Café") == ["École", "café"]

    @given(st.text())
    def test_matches_reference(self, text):
        assert tokenize(text) == ref_tokenize(text)

    @given(st.text())
    def test_idempotent(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks

    @given(st.text())
    def test_no_separators_in_tokens(self, text):
        for t in tokenize(text):
            assert t
            assert "," not in t
            assert not any(ch.isspace() for ch in t)


def test_record_tokens_default_fields():
    r = rec(title="IMG 1", description="Santa Barbara", tags=("Santa Barbara", "pier"))
    assert record_tokens(r) == ["santa", "barbara", "pier", "img", "1"]
    assert record_tokens(r, ("description",)) == ["santa", "barbara"]


def test_contains_subsequence():
    assert contains_subsequence(["a", "santa", "barbara"], ["santa", "barbara"])
    assert not contains_subsequence(["barbara", "santa"], ["santa", "barbara"])
    assert not contains_subsequence(["a"], [])


def test_parse_timestamp_forms():
    assert parse_timestamp("12/30/2010 10:39") == datetime(2010, 12, 30, 10, 39, tzinfo=timezone.utc)
    assert parse_timestamp("2010-12-30T10:39:00Z") == datetime(2010, 12, 30, 10, 39, tzinfo=timezone.utc)
    assert parse_timestamp("yesterday") is None
    assert parse_timestamp("") is None


def test_record_validation_and_coords():
    with pytest.raises(ValueError):
        rec(photo_id="")
    with pytest.raises(ValueError):
        rec(user_id="")
    assert rec(lat=0.0, lon=0.0).has_valid_coords
    assert not rec(lat=91.0).has_valid_coords
    assert not rec(lon=float("nan")).has_valid_coords
    assert rec(taken_time="1/4/2011 20:22").taken_at.year == 2011


def test_geometry_types():
    with pytest.raises(GeometryError):
        LineString([(0, 0)])
    with pytest.raises(GeometryError):
        LineString([(0, 0), (0, 0), (1, 1)])
    with pytest.raises(GeometryError):
        Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])  # not closed
    sq = Polygon([(0, 0), (2, 0), (2, 1), (0, 1), (0, 0)])
    assert sq.bbox == BBox(0, 0, 2, 1)
    assert MultiPolygon((sq, sq)).parts[0] == sq
    with pytest.raises(ValueError):
        BBox(1, 0, 0, 1)
    assert BBox(0, 0, 1, 1).contains(1, 1)
    assert not BBox(0, 0, 1, 1).contains(1.01, 0.5)
    assert Point(1, 2).coords == (1, 2)


def test_entry_invariants():
    kw = dict(name="n", feature_type="t", footprint=Point(0, 0), n_points=1)
    GazetteerEntry(top_tags=[("a", 2), ("b", 2), ("c", 1)], contributors={"u"}, trusted_contributors=set(), **kw)
    with pytest.raises(ValueError):
        GazetteerEntry(top_tags=[("b", 2), ("a", 2)], contributors={"u"}, trusted_contributors=set(), **kw)
    with pytest.raises(ValueError):
        GazetteerEntry(top_tags=[], contributors={"u"}, trusted_contributors={"v"}, **kw)
