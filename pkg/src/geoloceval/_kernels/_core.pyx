# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geodesic kernels: batch haversine, medoid sums, nearest-centroid scan."""

from libc.math cimport sin, cos, asin, sqrt, M_PI
from libc.stdlib cimport malloc, free

cdef double EARTH_RADIUS_KM = 6371.0088
cdef double DEG = M_PI / 180.0


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2) noexcept nogil:
    cdef double p1 = lat1 * DEG
    cdef double p2 = lat2 * DEG
    cdef double sdp = sin((lat2 - lat1) * DEG * 0.5)
    cdef double sdl = sin((lon2 - lon1) * DEG * 0.5)
    cdef double h = sdp * sdp + cos(p1) * cos(p2) * sdl * sdl
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * asin(sqrt(h))


def haversine_km(double lat1, double lon1, double lat2, double lon2):
    return _hav(lat1, lon1, lat2, lon2)


def haversine_pairs(double[::1] lat1, double[::1] lon1,
                    double[::1] lat2, double[::1] lon2):
    cdef Py_ssize_t n = lat1.shape[0]
    cdef Py_ssize_t i
    out = [0.0] * n
    for i in range(n):
        out[i] = _hav(lat1[i], lon1[i], lat2[i], lon2[i])
    return out


def distance_sums(double[::1] lats, double[::1] lons):
    cdef Py_ssize_t n = lats.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    out = [0.0] * n
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += _hav(lats[i], lons[i], lats[j], lons[j])
        out[i] = acc
    return out


def nearest_indices(double[::1] qlats, double[::1] qlons,
                    double[::1] glats, double[::1] glons):
    # Max dot product of unit vectors == min great-circle distance;
    # first reference index wins ties, matching the pure fallback.
    cdef Py_ssize_t nq = qlats.shape[0]
    cdef Py_ssize_t m = glats.shape[0]
    cdef Py_ssize_t i, j, best
    cdef double lat, lon, c, qx, qy, qz, dot, best_dot
    cdef double *gx = <double *> malloc(m * sizeof(double))
    cdef double *gy = <double *> malloc(m * sizeof(double))
    cdef double *gz = <double *> malloc(m * sizeof(double))
    if gx == NULL or gy == NULL or gz == NULL:
        free(gx); free(gy); free(gz)
        raise MemoryError()
    out = [0] * nq
    try:
        with nogil:
            for j in range(m):
                lat = glats[j] * DEG
                lon = glons[j] * DEG
                c = cos(lat)
                gx[j] = c * cos(lon)
                gy[j] = c * sin(lon)
                gz[j] = sin(lat)
        for i in range(nq):
            lat = qlats[i] * DEG
            lon = qlons[i] * DEG
            c = cos(lat)
            qx = c * cos(lon)
            qy = c * sin(lon)
            qz = sin(lat)
            best = 0
            best_dot = -2.0
            with nogil:
                for j in range(m):
                    dot = qx * gx[j] + qy * gy[j] + qz * gz[j]
                    if dot > best_dot:
                        best_dot = dot
                        best = j
            out[i] = best
    finally:
        free(gx); free(gy); free(gz)
    return out
