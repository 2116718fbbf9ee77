"""Pure-Python geodesic kernels.

Fallback used when the compiled extension is unavailable. Same semantics
as ``_core``: identical formulas, identical tie-breaking (first index wins).
"""
from __future__ import annotations

import math
from typing import Sequence

EARTH_RADIUS_KM = 6371.0088

_DEG = math.pi / 180.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km between two lat/lon points (degrees)."""
    p1 = lat1 * _DEG
    p2 = lat2 * _DEG
    dp = (lat2 - lat1) * _DEG
    dl = (lon2 - lon1) * _DEG
    sdp = math.sin(dp * 0.5)
    sdl = math.sin(dl * 0.5)
    h = sdp * sdp + math.cos(p1) * math.cos(p2) * sdl * sdl
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def haversine_pairs(
    lat1: Sequence[float],
    lon1: Sequence[float],
    lat2: Sequence[float],
    lon2: Sequence[float],
) -> list[float]:
    """Element-wise great-circle distances over four equal-length sequences."""
    return [
        haversine_km(lat1[i], lon1[i], lat2[i], lon2[i]) for i in range(len(lat1))
    ]


def distance_sums(lats: Sequence[float], lons: Sequence[float]) -> list[float]:
    """For each point, the sum of distances to every point in the set (O(n^2))."""
    n = len(lats)
    out = [0.0] * n
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += haversine_km(lats[i], lons[i], lats[j], lons[j])
        out[i] = acc
    return out


def nearest_indices(
    qlats: Sequence[float],
    qlons: Sequence[float],
    glats: Sequence[float],
    glons: Sequence[float],
) -> list[int]:
    """Index of the nearest reference point for each query point.

    Nearest by great-circle distance; computed as the maximum dot product of
    unit vectors, which orders identically. First reference index wins ties.
    """
    m = len(glats)
    gx = [0.0] * m
    gy = [0.0] * m
    gz = [0.0] * m
    for j in range(m):
        lat = glats[j] * _DEG
        lon = glons[j] * _DEG
        c = math.cos(lat)
        gx[j] = c * math.cos(lon)
        gy[j] = c * math.sin(lon)
        gz[j] = math.sin(lat)
    out = [0] * len(qlats)
    for i in range(len(qlats)):
        lat = qlats[i] * _DEG
        lon = qlons[i] * _DEG
        c = math.cos(lat)
        qx = c * math.cos(lon)
        qy = c * math.sin(lon)
        qz = math.sin(lat)
        best = 0
        best_dot = -2.0
        for j in range(m):
            dot = qx * gx[j] + qy * gy[j] + qz * gz[j]
            if dot > best_dot:
                best_dot = dot
                best = j
        out[i] = best
    return out
