"""geoloceval: standardized evaluation of document/user geolocation systems."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .geo import (
    EARTH_RADIUS_KM,
    MAX_ERROR_DISTANCE_KM,
    UNRESOLVED_PATH,
    AdminPath,
    GeoPoint,
    Granularity,
    great_circle_distance,
    medoid,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "EARTH_RADIUS_KM",
    "MAX_ERROR_DISTANCE_KM",
    "UNRESOLVED_PATH",
    "AdminPath",
    "GeoPoint",
    "Granularity",
    "great_circle_distance",
    "medoid",
    "__version__",
]
