"""Shared fixture machinery: a synthetic world with a controllable gazetteer."""
import json
import random

import pytest

from geoloceval.geo import GeoPoint


class SyntheticWorld:
    """A grid of cities with a known hierarchy for end-to-end fixtures.

    Every city gets a distinct centroid far from its neighbours, so a
    prediction placed at a centroid resolves to that city unambiguously.
    Cities roll up two-per-county, two-counties-per-state, two-states-per-
    country, which makes granularity behaviour easy to reason about.
    """

    def __init__(self, n_cities: int, seed: int = 0):
        assert n_cities <= 160
        self.n_cities = n_cities
        self.rng = random.Random(seed)
        self.centroids = []
        for i in range(n_cities):
            lat = -72.0 + 144.0 * (i // 16) / 9.0
            lon = -170.0 + 340.0 * (i % 16) / 15.0
            self.centroids.append(GeoPoint(lat, lon))

    def labels(self, i: int) -> dict:
        return {
            "city": f"city{i:03d}",
            "county": f"county{i // 2:03d}",
            "state": f"state{i // 4:03d}",
            "country": f"country{i // 8:03d}",
        }

    def gazetteer_csv(self) -> str:
        lines = ["city,county,state,country,lat,lon"]
        for i, c in enumerate(self.centroids):
            lbl = self.labels(i)
            lines.append(
                f"{lbl['city']},{lbl['county']},{lbl['state']},{lbl['country']},"
                f"{c.lat},{c.lon}"
            )
        return "\n".join(lines) + "\n"

    def truth_doc(self, city: int, jitter: float = 0.0) -> dict:
        c = self.centroids[city]
        return {
            "lon": c.lon + (self.rng.uniform(-jitter, jitter) if jitter else 0.0),
            "lat": c.lat + (self.rng.uniform(-jitter, jitter) if jitter else 0.0),
        }

    def truth_json(self, assignment: list[int], labelled: bool = True) -> str:
        doc = {}
        for d, city in enumerate(assignment):
            record = self.truth_doc(city)
            if labelled:
                record.update(self.labels(city))
            doc[f"d{d:05d}"] = record
        return json.dumps(doc, indent=1) + "\n"

    def run_json(self, assignment: list[int], accuracy: float, seed: int) -> str:
        """Predictions hitting the true city with the given probability."""
        rng = random.Random(seed)
        doc = {}
        for d, city in enumerate(assignment):
            if rng.random() < accuracy:
                target = city
            else:
                target = rng.randrange(self.n_cities - 1)
                if target >= city:
                    target += 1
            c = self.centroids[target]
            doc[f"d{d:05d}"] = {"lon": c.lon, "lat": c.lat}
        return json.dumps(doc, indent=1) + "\n"


@pytest.fixture
def world():
    return SyntheticWorld(n_cities=32, seed=7)


@pytest.fixture
def small_setup(tmp_path, world):
    """Truth + two runs + gazetteer on disk, ready for the pipeline."""
    rng = random.Random(3)
    assignment = [rng.randrange(world.n_cities) for _ in range(60)]
    gazetteer = tmp_path / "gazetteer.csv"
    gazetteer.write_text(world.gazetteer_csv(), encoding="utf-8")
    truth = tmp_path / "truth.json"
    truth.write_text(world.truth_json(assignment), encoding="utf-8")
    run_a = tmp_path / "alpha.json"
    run_a.write_text(world.run_json(assignment, 0.8, seed=21), encoding="utf-8")
    run_b = tmp_path / "beta.json"
    run_b.write_text(world.run_json(assignment, 0.5, seed=22), encoding="utf-8")
    return {
        "world": world,
        "assignment": assignment,
        "gazetteer": str(gazetteer),
        "truth": str(truth),
        "runs": [str(run_a), str(run_b)],
        "tmp_path": tmp_path,
    }
