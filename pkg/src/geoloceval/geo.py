"""Geodesic math and the domain types shared by every other module."""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from . import _kernels

EARTH_RADIUS_KM = _kernels.EARTH_RADIUS_KM
# Half circumference: no two points on the sphere are further apart.
MAX_ERROR_DISTANCE_KM = math.pi * EARTH_RADIUS_KM


def _normalize_lon(lon: float) -> float:
    # Inputs are validated to [-180, 180]; identify -180 with +180 so the
    # normalized domain is (-180, +180].
    return 180.0 if lon == -180.0 else lon


@dataclass(frozen=True, order=True)
class GeoPoint:
    """A latitude/longitude pair in decimal degrees.

    The unified output format of every system under evaluation. Construction
    rejects non-finite values and out-of-range coordinates; longitude -180 is
    normalized to +180.
    """

    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"coordinates must be finite, got ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", _normalize_lon(lon))

    def antipode(self) -> GeoPoint:
        lon = self.lon - 180.0 if self.lon > 0.0 else self.lon + 180.0
        return GeoPoint(-self.lat, lon)


class Granularity(IntEnum):
    """The four administrative levels, ordered finest to coarsest."""

    CITY = 0
    COUNTY = 1
    STATE = 2
    COUNTRY = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> Granularity:
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown granularity {text!r}; expected one of "
                f"{', '.join(g.label for g in cls)}"
            ) from None


ALL_GRANULARITIES = tuple(Granularity)

# Identity-compared marker so an unresolved path never matches any real key.
_UNRESOLVED_KEY = object()


@dataclass(frozen=True)
class AdminPath:
    """Nested administrative labels (country down to city) for one point.

    ``country`` is always present on real paths; finer levels may be absent
    (``None``, never an empty string). The reserved unresolved path stands in
    for points no provider could resolve and compares unequal to every real
    location at every granularity.
    """

    country: str | None
    state: str | None = None
    county: str | None = None
    city: str | None = None
    unresolved: bool = False

    def __post_init__(self):
        if self.unresolved:
            if any(v is not None for v in (self.country, self.state, self.county, self.city)):
                raise ValueError("unresolved path carries no labels")
            return
        for name, value in (
            ("country", self.country),
            ("state", self.state),
            ("county", self.county),
            ("city", self.city),
        ):
            if value is None:
                if name == "country":
                    raise ValueError("country label is required")
                continue
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} label must be non-empty text, got {value!r}")

    def key(self, granularity: Granularity) -> tuple:
        """Comparison key at a granularity: labels from country down to it."""
        if self.unresolved:
            return (_UNRESOLVED_KEY,)
        labels = (self.country, self.state, self.county, self.city)
        # country is index 3 in Granularity order, city is 0
        return labels[: 4 - granularity.value]

    def matches_at(self, other: AdminPath, granularity: Granularity) -> bool:
        return self.key(granularity) == other.key(granularity)


UNRESOLVED_PATH = AdminPath(country=None, unresolved=True)


def path_sort_key(key: tuple) -> tuple[str, ...]:
    """Total order over granularity keys; absent levels sort first."""
    return tuple("" if label is None else label for label in key)


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in kilometers.

    Haversine form over the IUGG mean Earth radius (6371.0088 km), chosen for
    numerical stability at small separations.
    """
    return _kernels.haversine_km(a.lat, a.lon, b.lat, b.lon)


def medoid(points: Sequence[GeoPoint]) -> GeoPoint:
    """The member point minimizing total great-circle distance to the others.

    Ties on the distance sum break by (lat, lon) lexicographic order. Raises
    ``ValueError`` on an empty input: a home location cannot be derived from
    nothing.
    """
    if not points:
        raise ValueError("medoid of an empty point set is undefined")
    if len(points) == 1:
        return points[0]
    lats = array("d", (p.lat for p in points))
    lons = array("d", (p.lon for p in points))
    sums = _kernels.distance_sums(lats, lons)
    best = min(range(len(points)), key=lambda i: (sums[i], points[i].lat, points[i].lon))
    return points[best]
