"""Geodesic kernel selection: compiled extension if built, pure Python otherwise.

All callers go through this module; both backends expose the same four
functions (``haversine_km``, ``haversine_pairs``, ``distance_sums``,
``nearest_indices``) with identical semantics. Batch functions take
``array.array('d')`` (or any C-double buffer) in the compiled backend and any
float sequence in the pure one; call sites always pass ``array.array('d')``.
"""
from __future__ import annotations

try:
    from . import _core as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built on this install
    from . import pure as _impl

    BACKEND = "pure"

from .pure import EARTH_RADIUS_KM

haversine_km = _impl.haversine_km
haversine_pairs = _impl.haversine_pairs
distance_sums = _impl.distance_sums
nearest_indices = _impl.nearest_indices

__all__ = [
    "BACKEND",
    "EARTH_RADIUS_KM",
    "haversine_km",
    "haversine_pairs",
    "distance_sums",
    "nearest_indices",
]
