"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers
from typing import Sequence

import numpy as np
from sklearn.utils.validation import check_array

from .model import GeoRecord


def check_lonlat(X, *, min_samples: int = 1) -> np.ndarray:
    """Coerce ``X`` to an ``(n, 2)`` float array of (lon, lat) degrees.

    Accepts a list of :class:`GeoRecord` as well as anything array-like.
    """
    if isinstance(X, Sequence) and len(X) and isinstance(X[0], GeoRecord):
        X = [(r.lon, r.lat) for r in X]
    if min_samples == 0 and len(X) == 0:
        return np.empty((0, 2), dtype=float)
    arr = check_array(X, dtype=float, ensure_min_samples=min_samples)
    if arr.shape[1] != 2:
        raise ValueError(f"expected 2 columns (lon, lat), got {arr.shape[1]}")
    if np.any(np.abs(arr[:, 0]) > 180) or np.any(np.abs(arr[:, 1]) > 90):
        raise ValueError("coordinates out of range: lon must be in [-180, 180], lat in [-90, 90]")
    return arr


def check_records(X) -> list[GeoRecord]:
    records = list(X)
    for i, r in enumerate(records):
        if not isinstance(r, GeoRecord):
            raise TypeError(f"item {i} is {type(r).__name__}, expected GeoRecord")
    return records


def check_scalar_range(value, name: str, *, low=None, high=None, include_low=True, include_high=True, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(value, kind) or isinstance(value, bool):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
    if low is not None and (value < low or (value == low and not include_low)):
        raise ValueError(f"{name}={value} is below the allowed range")
    if high is not None and (value > high or (value == high and not include_high)):
        raise ValueError(f"{name}={value} is above the allowed range")
    return value
