"""Backend equivalence: the compiled extension and the pure fallback agree."""
import random
from array import array

import pytest

from geoloceval import _kernels
from geoloceval._kernels import pure
from geoloceval.geo import GeoPoint, great_circle_distance

compiled = pytest.importorskip(
    "geoloceval._kernels._core", reason="compiled kernels not built"
)


def random_coords(n, seed):
    rng = random.Random(seed)
    lats = array("d", (rng.uniform(-90, 90) for _ in range(n)))
    lons = array("d", (rng.uniform(-180, 180) for _ in range(n)))
    return lats, lons


def test_haversine_scalar_agrees():
    rng = random.Random(1)
    for _ in range(500):
        args = (
            rng.uniform(-90, 90), rng.uniform(-180, 180),
            rng.uniform(-90, 90), rng.uniform(-180, 180),
        )
        assert compiled.haversine_km(*args) == pytest.approx(
            pure.haversine_km(*args), rel=1e-12, abs=1e-9
        )


def test_haversine_pairs_agree():
    lat1, lon1 = random_coords(300, 2)
    lat2, lon2 = random_coords(300, 3)
    got = compiled.haversine_pairs(lat1, lon1, lat2, lon2)
    want = pure.haversine_pairs(lat1, lon1, lat2, lon2)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-9)


def test_distance_sums_agree():
    lats, lons = random_coords(60, 4)
    got = compiled.distance_sums(lats, lons)
    want = pure.distance_sums(lats, lons)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-6)


def test_nearest_indices_agree():
    qlats, qlons = random_coords(200, 5)
    glats, glons = random_coords(50, 6)
    assert compiled.nearest_indices(qlats, qlons, glats, glons) == pure.nearest_indices(
        qlats, qlons, glats, glons
    )


def test_nearest_indices_match_linear_scan_by_distance():
    # Independent oracle: exhaustive scan using the public distance function.
    qlats, qlons = random_coords(150, 7)
    glats, glons = random_coords(40, 8)
    refs = [GeoPoint(lat, lon) for lat, lon in zip(glats, glons)]
    got = _kernels.nearest_indices(qlats, qlons, glats, glons)
    for i in range(len(qlats)):
        q = GeoPoint(qlats[i], qlons[i])
        dists = [great_circle_distance(q, r) for r in refs]
        assert dists[got[i]] == pytest.approx(min(dists), rel=1e-12, abs=1e-9)


def test_nearest_tie_break_is_first_row():
    # Two identical reference rows: both backends must pick index 0.
    qlats = array("d", [10.0])
    qlons = array("d", [10.0])
    glats = array("d", [20.0, 20.0])
    glons = array("d", [30.0, 30.0])
    assert compiled.nearest_indices(qlats, qlons, glats, glons) == [0]
    assert pure.nearest_indices(qlats, qlons, glats, glons) == [0]
