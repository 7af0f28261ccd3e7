import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gazforge.bench import grid_layer
from gazforge.estimators import (
    FuzzyAlphaCut,
    ReputationScorer,
    SpatialJoinCounter,
    StandardDeviationalEllipse,
    TagCooccurrence,
)
from gazforge.footprints import DEFAULT_FUZZY, alpha_cut, fuzzy_membership
from gazforge.geometry import from_local_m, sde
from gazforge.jobs import cooccurrence_job, spatial_join_job
from gazforge.model import BBox, GazetteerEntry, GeoRecord, Point
from gazforge.oracle import sequential_spatial_join
from gazforge.trust import ReliabilityContext, build_profiles


def normal_cloud(n=2000, seed=3, center=(-119.7, 34.4)):
    rng = np.random.default_rng(seed)
    lon, lat = from_local_m(rng.normal(0, 60, n), rng.normal(0, 30, n), center)
    return np.column_stack([lon, lat])


class TestParams:
    @pytest.mark.parametrize("est", [
        StandardDeviationalEllipse(k=1.5), FuzzyAlphaCut(alpha=0.3, boundary="mbr"),
        SpatialJoinCounter(workers=2), TagCooccurrence("city museum", top_k=3), ReputationScorer(min_tags=4),
    ])
    def test_clone_round_trip(self, est):
        c = clone(est)
        assert c.get_params() == est.get_params() and c is not est

    def test_set_params(self):
        est = FuzzyAlphaCut().set_params(alpha=0.8, d2=900.0)
        assert (est.alpha, est.d2) == (0.8, 900.0)


class TestSDE:
    def test_matches_function(self):
        X = normal_cloud()
        est = StandardDeviationalEllipse(k=2.0).fit(X)
        e = sde(X, 2.0)
        assert (est.semi_major_m_, est.semi_minor_m_, est.theta_) == (e.semi_major_m, e.semi_minor_m, e.theta)
        assert 0.85 <= est.score(X) <= 0.99

    def test_not_fitted_and_validation(self):
        with pytest.raises(NotFittedError):
            StandardDeviationalEllipse().predict([[0, 0]])
        with pytest.raises(ValueError):
            StandardDeviationalEllipse(k=0).fit(normal_cloud())
        with pytest.raises(ValueError):
            StandardDeviationalEllipse().fit([[0, 0], [1, 1]])
        with pytest.raises(ValueError):
            StandardDeviationalEllipse().fit([[0, 0], [1, 1], [200, 0]])


class TestFuzzy:
    def test_transform_matches_membership(self):
        X = normal_cloud(500)
        est = FuzzyAlphaCut(alpha=0.5).fit(X)
        mu = est.transform(X)
        assert mu.shape == (500, 1)
        assert np.all((mu >= 0) & (mu <= 1))
        cut = alpha_cut(
            [GeoRecord(str(i), "", "", (), "", "", y, x, "u") for i, (x, y) in enumerate(X)],
            est.center_, DEFAULT_FUZZY, 0.5,
        )
        assert est.n_members_ == len(cut.records) == int(est.predict(X).sum())

    def test_at_center(self):
        est = FuzzyAlphaCut().fit(normal_cloud(50))
        c = est.center_
        assert est.transform([[c.lon, c.lat]])[0, 0] == fuzzy_membership(0.0, DEFAULT_FUZZY) == 1.0

    def test_bad_params(self):
        with pytest.raises(ValueError):
            FuzzyAlphaCut(alpha=0).fit(normal_cloud(10))
        with pytest.raises(ValueError):
            FuzzyAlphaCut(boundary="circle").fit(normal_cloud(10))
        with pytest.raises(ValueError):
            FuzzyAlphaCut(d1=10, d2=5).fit(normal_cloud(10))


class TestJoinCounter:
    def test_transform_matches_oracle(self):
        layer = grid_layer(12, (0.0, 0.0, 3.0, 4.0))
        rng = np.random.default_rng(9)
        X = rng.uniform([-0.5, -0.5], [3.5, 4.5], size=(3000, 2))
        est = SpatialJoinCounter(workers=2, block_size=700).fit(layer)
        counts, _ = sequential_spatial_join(X[:, 0], X[:, 1], layer)
        got = est.transform(X)[:, 0]
        assert got.tolist() == [counts.get(k, 0) for k in est.keys_]

    def test_records_with_ids(self):
        layer = grid_layer(4, (0.0, 0.0, 2.0, 2.0))
        recs = [GeoRecord(f"p{i}", "", "", (), "", "", 0.5, 0.5 + i, "u") for i in range(2)]
        rows = SpatialJoinCounter(collect_ids=True).fit(layer).join(recs)
        assert {k: a["point_ids"] for k, _, a in rows if a["count"]} == {"r0000c0000": ["p0"], "r0000c0001": ["p1"]}
        assert spatial_join_job(recs, layer, True).ids == {"r0000c0000": ("p0",), "r0000c0001": ("p1",)}

    def test_validation(self):
        layer = grid_layer(4)
        with pytest.raises(ValueError):
            SpatialJoinCounter(workers=0).fit(layer)
        with pytest.raises(TypeError):
            SpatialJoinCounter(block_size=1.5).fit(layer)
        with pytest.raises(NotFittedError):
            SpatialJoinCounter().transform([[0, 0]])


def rec(i, title, tags=(), user="u", lat=0.0, lon=0.0):
    return GeoRecord(str(i), title, "", tuple(tags), "", "", lat, lon, user)


class TestCooccurrence:
    def test_fit(self):
        rs = [rec(0, "City Museum", ["art", "museum"]), rec(1, "city museum hall", ["art"]), rec(2, "museum", ["art"])]
        est = TagCooccurrence("city museum", top_k=2).fit(rs)
        assert est.counts_ == cooccurrence_job(rs, "city museum")
        assert est.top_tags_ == [("art", 2), ("hall", 1)]

    def test_validation(self):
        with pytest.raises(ValueError):
            TagCooccurrence("x", top_k=0).fit([rec(0, "x")])
        with pytest.raises(TypeError):
            TagCooccurrence("x").fit([("not", "a", "record")])


class TestReputation:
    def test_fit_and_filter(self):
        rs = [rec(i, "", user=f"u{i % 3}", lat=1.0, lon=1.0) for i in range(12)] + [rec(99, "", user="u0", lat=9, lon=9)]
        region = BBox(0, 0, 2, 2)
        est = ReputationScorer(region=region, min_contributors=2, min_tags=0).fit(rs)
        assert [p.user_id for p in est.profiles_] == [p.user_id for p in build_profiles(rs, ReliabilityContext(region))]
        assert est.reputation_["u0"] == pytest.approx(4 / 5, abs=1e-12)

        e = GazetteerEntry("e", "landmark", Point(1, 1), [], {"u0", "u1"}, {"u0", "u1"}, 2)
        acc, rej = est.filter([e])
        assert [x.name for x in acc] == ["e"] and rej == []

    def test_bad_region(self):
        with pytest.raises(TypeError):
            ReputationScorer(region=(0, 0, 1, 1)).fit([rec(0, "")])
