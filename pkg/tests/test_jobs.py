import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazforge.ingest import LayerError, PolygonLayer, read_geojson_layer
from gazforge.jobs import (
    DEFAULT_LEXICON,
    PointBatch,
    PreparedLayer,
    SummaryRow,
    cooccurrence_job,
    extract_by_type,
    format_summary_tsv,
    join_back,
    matching_records,
    multiscale_summary,
    parse_lexicon,
    rank_tags,
    spatial_join_job,
    tag_frequency_job,
)
from gazforge.mapreduce import KeyedCounts
from gazforge.model import GeoRecord, MultiPolygon, Polygon
from gazforge.oracle import brute_cooccurrence, sequential_spatial_join


def rec(pid, tags=(), title="", lon=0.0, lat=0.0, user="u"):
    return GeoRecord(str(pid), title, "", tuple(tags), "", "", lat, lon, user)


def quad_layer():
    sq = lambda x, y: Polygon([(x, y), (x + 0.5, y), (x + 0.5, y + 0.5), (x, y + 0.5), (x, y)])
    return PolygonLayer.from_polygons("quad", [("SW", sq(0, 0)), ("SE", sq(0.5, 0)), ("NW", sq(0, 0.5)), ("NE", sq(0.5, 0.5))])


class TestCooccurrence:
    def test_empty(self):
        assert cooccurrence_job([], "paris").counts == {}

    def test_three_records(self):
        rs = [rec(1, ["paris", "tower"]), rec(2, ["paris", "tower", "seine"]), rec(3, ["rome", "tower"])]
        assert cooccurrence_job(rs, "paris").counts == {"seine": 1, "tower": 2}

    def test_self_exclusion(self):
        assert cooccurrence_job([rec(1, ["paris"])], "paris").counts == {}
        assert cooccurrence_job([rec(1, ["paris"])], "paris", exclude_place=False).counts == {"paris": 1}

    def test_multi_token_place_contiguous(self):
        rs = [rec(1, ["Santa Barbara", "pier"]), rec(2, ["barbara", "santa", "x"]), rec(3, ["santa barbara!"], "IMG")]
        assert cooccurrence_job(rs, "Santa Barbara").counts == {"img": 1, "pier": 1}

    def test_record_counts_once(self):
        assert cooccurrence_job([rec(1, ["p", "x", "X", "x"])], "p").counts == {"x": 1}

    def test_blank_place(self):
        with pytest.raises(ValueError):
            cooccurrence_job([], " , ")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.sampled_from(["paris", "tower", "Seine", "rome", "x y", "paris tower"]), max_size=4),
                    max_size=30),
           st.sampled_from(["paris", "tower", "paris tower"]), st.sampled_from([1, 2]))
    def test_matches_brute_force(self, tag_lists, place, workers):
        rs = [rec(i, tags) for i, tags in enumerate(tag_lists)]
        got = cooccurrence_job(rs, place, workers, block_size=4)
        assert got.counts == brute_cooccurrence(rs, place)

    def test_frequency(self):
        rs = [rec(1, ["a", "b"], "t"), rec(2, ["a"])]
        assert tag_frequency_job(rs).counts == {"a": 2, "b": 1, "t": 1}


class TestRankTags:
    def test_tie_break(self):
        assert rank_tags({"a": 3, "b": 3, "c": 1}, 2) == [("a", 3), ("b", 3)]

    def test_empty(self):
        assert rank_tags({}, 10) == []

    def test_bad_k(self):
        with pytest.raises(ValueError):
            rank_tags({}, 0)


class TestSpatialJoin:
    def test_no_points(self):
        layer = PolygonLayer.from_polygons("g", [(f"p{i}", Polygon([(i, 0), (i + 1, 0), (i + 1, 1), (i, 0)])) for i in range(51)])
        rows = join_back(layer, spatial_join_job([], layer))
        assert len(rows) == 51 and all(a["count"] == 0 for _, _, a in rows)

    def test_quadrants_conservation_and_oracle(self):
        rng = np.random.default_rng(0)
        lon, lat = rng.uniform(0, 1, 1000), rng.uniform(0, 1, 1000)
        layer = quad_layer()
        got = spatial_join_job(PointBatch(lon, lat), layer, workers=2, block_size=128)
        want, _ = sequential_spatial_join(lon, lat, layer)
        assert got.counts == dict(sorted(want.items()))
        assert got.total() == 1000  # no random point hits a shared edge

    def test_shared_edge_counted_twice(self):
        got = spatial_join_job(PointBatch(np.array([0.5, 0.5]), np.array([0.75, 0.5])), quad_layer())
        assert got.counts == {"NE": 2, "NW": 2, "SE": 1, "SW": 1}

    def test_ids(self):
        batch = PointBatch(np.array([0.1, 0.9, 0.2]), np.array([0.1, 0.9, 0.2]), np.array(["c", "b", "a"]))
        got = spatial_join_job(batch, quad_layer(), collect_ids=True, workers=2, block_size=1)
        assert got.ids == {"NE": ("b",), "SW": ("a", "c")}
        with pytest.raises(ValueError):
            spatial_join_job(PointBatch(np.zeros(1), np.zeros(1)), quad_layer(), collect_ids=True)

    def test_records_input(self):
        rs = [rec(i, lon=0.25, lat=0.25) for i in range(3)]
        assert spatial_join_job(rs, quad_layer(), collect_ids=True).ids == {"SW": ("0", "1", "2")}

    def test_large_ring_and_holes_path(self):
        t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
        ring = list(zip(np.cos(t), np.sin(t)))
        circle = Polygon(ring + [ring[0]])
        layer = PolygonLayer.from_polygons("c", [("circle", circle), ("sq", Polygon([(0, 0), (2, 0), (2, 2), (0, 2), (0, 0)]))])
        rng = np.random.default_rng(1)
        lon, lat = rng.uniform(-1.5, 2.5, 5000), rng.uniform(-1.5, 2.5, 5000)
        got = spatial_join_job(PointBatch(lon, lat), layer, workers=2, block_size=700)
        assert got.counts == dict(sorted(sequential_spatial_join(lon, lat, layer)[0].items()))

    def test_prepared_candidates_superset(self):
        layer = quad_layer()
        prep = PreparedLayer(layer)
        x, y = np.array([0.25, 0.75, 5.0]), np.array([0.25, 0.75, 5.0])
        pt, poly = prep.candidates(x, y)
        assert set(zip(pt.tolist(), poly.tolist())) >= {(0, 0), (1, 3)}
        assert 2 not in pt.tolist()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 60), st.integers(0, 400), st.sampled_from([1, 3]))
    def test_random_layers_vs_oracle(self, seed, n_poly, n_pts, workers):
        rng = np.random.default_rng(seed)
        items = []
        for i in range(n_poly):
            cx, cy = rng.uniform(-10, 10, 2)
            k = int(rng.integers(3, 40))
            ang = np.sort(rng.uniform(0, 2 * np.pi, k))
            r = rng.uniform(0.2, 3, k)
            ring = [(float(cx + a * np.cos(b)), float(cy + a * np.sin(b))) for a, b in zip(r, ang)]
            items.append((f"p{i}", Polygon(ring + [ring[0]])))
        layer = PolygonLayer.from_polygons("r", items)
        lon, lat = rng.uniform(-12, 12, n_pts), rng.uniform(-12, 12, n_pts)
        ids = np.array([str(i) for i in range(n_pts)], dtype=object)
        got = spatial_join_job(PointBatch(lon, lat, ids), layer, True, workers, block_size=97)
        want, want_ids = sequential_spatial_join(lon, lat, layer, list(ids))
        assert got.counts == dict(sorted(want.items()))
        assert got.ids == {k: tuple(v) for k, v in sorted(want_ids.items())}


class TestJoinBack:
    def test_missing_keys_zero(self):
        layer = PolygonLayer.from_polygons("l", [("A", Polygon([(0, 0), (1, 0), (1, 1), (0, 0)])),
                                                 ("B", Polygon([(2, 0), (3, 0), (3, 1), (2, 0)]))])
        rows = join_back(layer, KeyedCounts({"A": 5}))
        assert [(k, a["count"]) for k, _, a in rows] == [("A", 5), ("B", 0)]

    def test_multipart_merge(self, fixtures_dir):
        layer = read_geojson_layer((fixtures_dir / "multipolygon.geojson").read_text(), "name")
        rows = join_back(layer, KeyedCounts({"X#0": 2, "X#1": 3}, {"X#0": ("a", "b"), "X#1": ("c", "d", "e")}))
        (kx, gx, ax), (ky, _, ay) = rows
        assert (kx, ax["count"], ax["point_ids"]) == ("X", 5, ["a", "b", "c", "d", "e"])
        assert isinstance(gx, MultiPolygon) and len(gx.parts) == 2
        assert (ky, ay["count"], ay["point_ids"]) == ("Y", 0, [])

    def test_multipart_counts_from_job(self, fixtures_dir):
        layer = read_geojson_layer((fixtures_dir / "multipolygon.geojson").read_text(), "name")
        pts = PointBatch(np.array([0.5, 2.5, 2.6, 5.0, 4.2]), np.array([0.5, 0.5, 0.5, 1.0, 0.2]))
        rows = join_back(layer, spatial_join_job(pts, layer))
        # (5, 1) sits in Y's hole but only the outer ring is tested
        assert [a["count"] for _, _, a in rows] == [3, 2]

    def test_orphan_key(self):
        layer = PolygonLayer.from_polygons("l", [("A", Polygon([(0, 0), (1, 0), (1, 1), (0, 0)]))])
        with pytest.raises(LayerError, match="Z"):
            join_back(layer, KeyedCounts({"Z": 1}))

    def test_feature_count_preserved(self, fixtures_dir):
        layer = read_geojson_layer((fixtures_dir / "multipolygon.geojson").read_text(), "name")
        assert len(join_back(layer, KeyedCounts())) == len(layer.parent_keys)


class TestExtractByType:
    def test_whole_token(self):
        parks = ("parks", DEFAULT_LEXICON["parks"])
        keep, drop = rec(1, ["park", "trip"]), rec(2, ["parking"])
        assert extract_by_type([keep, drop], parks) == [keep]

    def test_non_ascii_keyword(self):
        r = rec(1, ["公园"])
        assert extract_by_type([r], ("parks", DEFAULT_LEXICON["parks"])) == [r]

    @given(st.lists(st.lists(st.sampled_from(["museum", "Museum!", "museums", "art", "x"]), max_size=3), max_size=20))
    def test_subset_and_idempotent(self, tag_lists):
        rs = [rec(i, t) for i, t in enumerate(tag_lists)]
        e = ("museums", DEFAULT_LEXICON["museums"])
        once = extract_by_type(rs, e)
        assert all(r in rs for r in once)
        assert extract_by_type(once, e) == once

    def test_lexicon_table(self):
        assert DEFAULT_LEXICON["coffee shops"] == ("coffee", "cafe", "coffeehouse", "coffeebar", "starbucks")
        assert DEFAULT_LEXICON["streets"] == ("street", "road", "blvd", "freeway", "highway")
        assert DEFAULT_LEXICON["rivers"] == ("river", "watershed")
        assert DEFAULT_LEXICON["schools"] == ("school", "university")

    def test_parse_lexicon(self, fixtures_dir):
        lex = parse_lexicon((fixtures_dir / "lexicon.txt").read_text(encoding="utf-8"))
        assert lex["parks"] == ("park", "公园", "parc", "parquet")
        assert list(lex) == ["parks", "museums", "schools"]
        with pytest.raises(ValueError):
            parse_lexicon("no colon here")

    def test_matching_records(self):
        rs = [rec(1, ["Santa Barbara Courthouse"]), rec(2, ["courthouse"])]
        assert matching_records(rs, "Santa Barbara Courthouse") == rs[:1]


class TestSummary:
    def test_single_polygon_covering_all(self):
        layer = PolygonLayer.from_polygons("all", [("x", Polygon([(-1, -1), (2, -1), (2, 2), (-1, 2), (-1, -1)]))])
        rs = [rec(i, lon=0.1 * i, lat=0.1) for i in range(7)]
        (row,) = multiscale_summary(rs, [layer])
        assert (row.joined, row.units_hit, row.mean_per_unit) == (7, 1, 7)

    def test_quadrants_vs_oracle(self, fixtures_dir):
        from gazforge.ingest import parse_tsv

        with open(fixtures_dir / "quadrant_points.tsv") as fh:
            rs, _ = parse_tsv(fh)
        layer = read_geojson_layer((fixtures_dir / "quadrants.geojson").read_text(), "zone", name="quad")
        (row,) = multiscale_summary(rs, [layer], 2, feature_type="grid")
        want, _ = sequential_spatial_join([r.lon for r in rs], [r.lat for r in rs], layer)
        hit = [c for c in want.values() if c > 0]
        assert row == SummaryRow("grid", "quad", 1000, sum(hit), len(hit), int(sum(hit) / len(hit) + 0.5))

    def test_empty_points(self):
        (row,) = multiscale_summary([], [quad_layer()])
        assert (row.records, row.joined, row.units_hit, row.mean_per_unit) == (0, 0, 0, 0)

    def test_round_half_up_and_format(self):
        layer = PolygonLayer.from_polygons("l", [("A", Polygon([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])),
                                                 ("B", Polygon([(2, 0), (3, 0), (3, 1), (2, 1), (2, 0)]))])
        rs = [rec(1, lon=0.5, lat=0.5), rec(2, lon=2.5, lat=0.5), rec(3, lon=2.6, lat=0.5), rec(4, lon=9, lat=9)]
        rows = multiscale_summary(rs, [layer], feature_type="parks")
        assert rows[0].mean_per_unit == 2  # 1.5 rounds up
        text = format_summary_tsv(rows, DEFAULT_LEXICON)
        assert text.splitlines()[1] == "parks\tpark, 公园, parc, parquet\t4\t2 per unit 2 units"

    def test_duplicate_layer_names(self):
        with pytest.raises(ValueError):
            multiscale_summary([], [quad_layer(), quad_layer()])
