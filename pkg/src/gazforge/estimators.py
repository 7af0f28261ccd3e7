"""scikit-learn style wrappers so the pipeline pieces compose with
``Pipeline``, ``clone`` and ``get_params``/``set_params``."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import footprints, geometry, jobs, trust
from .mapreduce import DEFAULT_BLOCK_SIZE
from .model import BBox, GeoRecord, Point
from .validation import check_lonlat, check_records, check_scalar_range


class StandardDeviationalEllipse(BaseEstimator):
    """Fit an SDE to (lon, lat) points; ``predict`` flags points inside it."""

    def __init__(self, k=2.0, sqrt2_correction=True):
        self.k = k
        self.sqrt2_correction = sqrt2_correction

    def fit(self, X, y=None):
        check_scalar_range(self.k, "k", low=0, include_low=False)
        X = check_lonlat(X, min_samples=3)
        self.ellipse_ = geometry.sde(X, self.k, self.sqrt2_correction)
        self.center_ = self.ellipse_.center
        self.semi_major_m_ = self.ellipse_.semi_major_m
        self.semi_minor_m_ = self.ellipse_.semi_minor_m
        self.theta_ = self.ellipse_.theta
        return self

    def predict(self, X):
        check_is_fitted(self, "ellipse_")
        X = check_lonlat(X)
        return geometry.points_in_ellipse(X[:, 0], X[:, 1], self.ellipse_)

    def score(self, X, y=None):
        """Fraction of points inside the ellipse."""
        return float(np.mean(self.predict(X)))


class FuzzyAlphaCut(TransformerMixin, BaseEstimator):
    """Distance-decay membership around the centroid of the fitted points.

    ``transform`` returns memberships as an ``(n, 1)`` column, ``predict``
    the alpha-cut mask, and ``boundary_`` the cut's MBR or convex hull.
    """

    def __init__(self, alpha=0.5, beta=1.0, c=5.0, d1=50.0, d2=5000.0, unit_scale=1.0, boundary="hull"):
        self.alpha = alpha
        self.beta = beta
        self.c = c
        self.d1 = d1
        self.d2 = d2
        self.unit_scale = unit_scale
        self.boundary = boundary

    def _params(self) -> footprints.FuzzyParams:
        return footprints.FuzzyParams(self.beta, self.c, self.d1, self.d2, self.unit_scale)

    def fit(self, X, y=None):
        check_scalar_range(self.alpha, "alpha", low=0, high=1, include_low=False)
        if self.boundary not in ("mbr", "hull"):
            raise ValueError("boundary must be 'mbr' or 'hull'")
        X = check_lonlat(X)
        self.params_ = self._params()
        self.center_ = Point(float(np.mean(X[:, 0])), float(np.mean(X[:, 1])))
        mask = self._mu(X) >= self.alpha
        pts = [tuple(p) for p in X[mask]]
        if not pts:
            raise footprints.InsufficientDataError(f"alpha-cut at alpha={self.alpha} is empty")
        self.boundary_ = geometry.convex_hull(pts) if self.boundary == "hull" else geometry.min_bounding_rect(pts)
        self.n_members_ = len(pts)
        return self

    def _mu(self, X):
        return footprints.fuzzy_membership_array(
            geometry.haversine_m_array(X[:, 0], X[:, 1], self.center_), self.params_
        )

    def transform(self, X):
        check_is_fitted(self, "center_")
        return self._mu(check_lonlat(X)).reshape(-1, 1)

    def predict(self, X):
        return self.transform(X)[:, 0] >= self.alpha


class SpatialJoinCounter(TransformerMixin, BaseEstimator):
    """Point-in-polygon counting against a fitted polygon layer.

    ``transform`` maps an ``(n, 2)`` point array to a ``(n_features, 1)``
    count column in layer order (multipart features summed).
    """

    def __init__(self, workers=1, block_size=DEFAULT_BLOCK_SIZE, collect_ids=False):
        self.workers = workers
        self.block_size = block_size
        self.collect_ids = collect_ids

    def fit(self, layer, y=None):
        if len(layer) == 0:
            raise ValueError("layer has no features")
        check_scalar_range(self.workers, "workers", low=1, integer=True)
        check_scalar_range(self.block_size, "block_size", low=1, integer=True)
        self.layer_ = layer
        self.keys_ = layer.parent_keys
        return self

    def _counts(self, X):
        if isinstance(X, jobs.PointBatch):
            batch = X
        elif isinstance(X, list) and X and isinstance(X[0], GeoRecord):
            batch = jobs.PointBatch.from_records(X, with_ids=self.collect_ids)
        else:
            arr = check_lonlat(X, min_samples=0)
            ids = np.array([str(i) for i in range(len(arr))], dtype=object) if self.collect_ids else None
            batch = jobs.PointBatch(arr[:, 0], arr[:, 1], ids)
        return jobs.spatial_join_job(batch, self.layer_, self.collect_ids, self.workers, block_size=self.block_size)

    def join(self, X):
        """Layer features with ``count`` (and ``point_ids``) attributes."""
        check_is_fitted(self, "layer_")
        return jobs.join_back(self.layer_, self._counts(X))

    def transform(self, X):
        rows = self.join(X)
        return np.array([[a["count"]] for _, _, a in rows], dtype=np.int64)


class TagCooccurrence(BaseEstimator):
    """Tokens co-occurring with a place name across a record collection."""

    def __init__(self, place_name="", top_k=10, exclude_place=True, workers=1):
        self.place_name = place_name
        self.top_k = top_k
        self.exclude_place = exclude_place
        self.workers = workers

    def fit(self, X, y=None):
        check_scalar_range(self.top_k, "top_k", low=1, integer=True)
        records = check_records(X)
        self.counts_ = jobs.cooccurrence_job(
            records, self.place_name, self.workers, exclude_place=self.exclude_place
        )
        self.top_tags_ = jobs.rank_tags(self.counts_, self.top_k)
        return self


class ReputationScorer(BaseEstimator):
    """User reputation from upload history, plus entry filtering."""

    def __init__(self, region=None, predicate="default", w_scheme="log",
                 min_contributors=15, min_tags=10, min_reputation=0.0):
        self.region = region
        self.predicate = predicate
        self.w_scheme = w_scheme
        self.min_contributors = min_contributors
        self.min_tags = min_tags
        self.min_reputation = min_reputation

    def fit(self, X, y=None):
        if self.region is not None and not isinstance(self.region, BBox):
            raise TypeError("region must be a BBox or None")
        records = check_records(X)
        ctx = trust.ReliabilityContext(self.region, None, self.predicate)
        self.profiles_ = trust.build_profiles(records, ctx, self.w_scheme)
        self.reputation_ = {p.user_id: p.reputation for p in self.profiles_}
        self.distribution_ = trust.contribution_distribution(self.profiles_)
        return self

    def filter(self, entries):
        check_is_fitted(self, "profiles_")
        t = trust.TrustThresholds(self.min_contributors, self.min_tags, self.min_reputation)
        return trust.filter_entries(entries, self.profiles_, t)
