"""Reverse geocoding through pluggable providers with a persistent cache.

Every system's predictions are resolved through one provider and one cache,
so all systems are scored over the same location vocabulary. The offline
gazetteer provider (nearest centroid by great-circle distance) is the default
for tests and reproducible runs; remote HTTP providers are opt-in and rate
limited.
"""
from __future__ import annotations

import csv
import io
import os
import threading
import time
from array import array
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from . import _kernels
from .errors import CacheCorruptError, ConfigError, GeocodeError
from .geo import MAX_ERROR_DISTANCE_KM, AdminPath, GeoPoint, UNRESOLVED_PATH
from .ingest import GroundTruth, PredictionRun

# ~1.1 m at the equator: fine enough that labels cannot drift across a key,
# coarse enough that re-queries of near-identical points hit the cache.
CACHE_KEY_DECIMALS = 5

CacheKey = tuple[float, float]


def cache_key(point: GeoPoint) -> CacheKey:
    return (round(point.lat, CACHE_KEY_DECIMALS), round(point.lon, CACHE_KEY_DECIMALS))


class GeocodeCache:
    """Point -> AdminPath cache, persisted as one CSV row per entry.

    File columns: lat,lon,country,state,county,city. Empty label fields mean
    the level is absent; a row with an empty country records a not-found
    outcome, which is cached like any other result so it never re-queries.
    """

    def __init__(self, entries: dict[CacheKey, AdminPath] | None = None):
        self.entries: dict[CacheKey, AdminPath] = dict(entries or {})
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._dirty = 0

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: CacheKey) -> AdminPath | None:
        with self._lock:
            path = self.entries.get(key)
            if path is None:
                self.misses += 1
            else:
                self.hits += 1
            return path

    def put(self, key: CacheKey, path: AdminPath) -> None:
        with self._lock:
            self.entries[key] = path
            self._dirty += 1


def load_cache(path: str) -> GeocodeCache:
    """Load a cache file; a missing file yields an empty cache."""
    if not os.path.exists(path):
        return GeocodeCache()
    entries = {}
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            for row in csv.reader(handle):
                if not row:
                    continue
                if len(row) != 6:
                    raise ValueError(f"expected 6 fields, got {len(row)}")
                lat, lon = float(row[0]), float(row[1])
                country, state, county, city = (v if v else None for v in row[2:])
                if country is None:
                    entries[(lat, lon)] = UNRESOLVED_PATH
                else:
                    entries[(lat, lon)] = AdminPath(
                        country=country, state=state, county=county, city=city
                    )
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise CacheCorruptError(
            f"cache file {path!r} is unreadable ({exc}); "
            "re-run with --rebuild-cache to discard it"
        ) from exc
    return GeocodeCache(entries)


def store_cache(cache: GeocodeCache, path: str) -> None:
    """Persist the cache atomically (write temp file, rename over target)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with cache._lock:
        snapshot = list(cache.entries.items())
        cache._dirty = 0
    with open(tmp, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for (lat, lon), p in snapshot:
            writer.writerow(
                [repr(lat), repr(lon), p.country or "", p.state or "", p.county or "", p.city or ""]
            )
    os.replace(tmp, path)


class RateLimiter:
    """Token-style limiter enforcing a minimum interval between requests."""

    def __init__(
        self,
        max_per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._interval = 1.0 / max_per_second if max_per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        if self._interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_at - now
            self._next_at = max(self._next_at, now) + self._interval
        if wait > 0:
            self._sleep(wait)


@dataclass(frozen=True)
class GazetteerRow:
    path: AdminPath
    centroid: GeoPoint


class Gazetteer:
    """Offline table of administrative paths with centroids."""

    def __init__(self, rows: Sequence[GazetteerRow]):
        if not rows:
            raise ConfigError("gazetteer has no rows")
        for row in rows:
            if row.path.unresolved or None in (
                row.path.country, row.path.state, row.path.county, row.path.city,
            ):
                raise ConfigError(f"gazetteer row {row.path} lacks one of the four levels")
        self.rows = list(rows)
        self._lats = array("d", (r.centroid.lat for r in self.rows))
        self._lons = array("d", (r.centroid.lon for r in self.rows))

    @classmethod
    def load(cls, path: str) -> Gazetteer:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            return cls.parse(handle)

    @classmethod
    def parse(cls, handle: io.TextIOBase) -> Gazetteer:
        reader = csv.DictReader(handle)
        expected = {"city", "county", "state", "country", "lat", "lon"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigError(
                f"gazetteer header must be exactly {sorted(expected)}, "
                f"got {reader.fieldnames}"
            )
        rows = []
        for i, record in enumerate(reader, start=2):
            try:
                rows.append(
                    GazetteerRow(
                        path=AdminPath(
                            country=record["country"],
                            state=record["state"],
                            county=record["county"],
                            city=record["city"],
                        ),
                        centroid=GeoPoint(lat=float(record["lat"]), lon=float(record["lon"])),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"gazetteer line {i}: {exc}") from None
        return cls(rows)

    def nearest(self, points: Sequence[GeoPoint]) -> list[AdminPath]:
        """Path of the nearest centroid for each point; ties go to the first row."""
        qlats = array("d", (p.lat for p in points))
        qlons = array("d", (p.lon for p in points))
        idx = _kernels.nearest_indices(qlats, qlons, self._lats, self._lons)
        return [self.rows[i].path for i in idx]


class GazetteerProvider:
    """Deterministic offline provider: nearest gazetteer centroid."""

    name = "offline"

    def __init__(self, gazetteer: Gazetteer):
        self.gazetteer = gazetteer
        self.calls = 0

    def resolve(self, point: GeoPoint) -> AdminPath | None:
        return self.resolve_many([point])[0]

    def resolve_many(self, points: Sequence[GeoPoint]) -> list[AdminPath | None]:
        self.calls += len(points)
        return list(self.gazetteer.nearest(points))


class _HttpProvider:
    """Shared machinery for remote geocoders: rate limit, budget, retries."""

    name = "remote"
    max_per_second = 1.0
    default_budget = 2500

    def __init__(
        self,
        endpoint: str | None = None,
        daily_budget: int | None = None,
        session=None,
        max_retries: int = 4,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        timeout: float = 10.0,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.endpoint = endpoint or self.default_endpoint
        self.budget = daily_budget if daily_budget is not None else self.default_budget
        self._session = session
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self._sleep = sleep
        self.calls = 0
        self._limiter = RateLimiter(self.max_per_second, clock=clock, sleep=sleep)
        self._lock = threading.Lock()

    @property
    def session(self):
        if self._session is None:
            import requests

            self._session = requests.Session()
        return self._session

    def _take_budget(self) -> None:
        with self._lock:
            if self.calls >= self.budget:
                raise GeocodeError(
                    f"provider {self.name!r} request budget of {self.budget} exhausted; "
                    "raise --requests-per-day or warm the cache in smaller batches"
                )
            self.calls += 1

    def _get(self, params: dict) -> dict:
        import requests

        self._take_budget()
        delay = self.backoff_base
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self._limiter.acquire()
            try:
                response = self.session.get(
                    self.endpoint, params=params, timeout=self.timeout,
                    headers=self._headers(),
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
            else:
                if response.status_code == 200:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise GeocodeError(
                            f"provider {self.name!r} returned unparseable JSON"
                        ) from exc
                if response.status_code not in (429, 500, 502, 503, 504):
                    raise GeocodeError(
                        f"provider {self.name!r} rejected the request "
                        f"(HTTP {response.status_code})"
                    )
                last_error = GeocodeError(
                    f"provider {self.name!r} transient HTTP {response.status_code}"
                )
            if attempt < self.max_retries:
                self._sleep(delay)
                delay = min(delay * 2, self.backoff_cap)
        raise GeocodeError(
            f"provider {self.name!r} unreachable after {self.max_retries + 1} attempts: "
            f"{last_error}"
        )

    def _headers(self) -> dict:
        return {}

    @staticmethod
    def _label(value) -> str | None:
        if isinstance(value, str) and value:
            return value
        return None


class NominatimProvider(_HttpProvider):
    """OpenStreetMap Nominatim reverse geocoder.

    Free tier: ~1 request/second and a small daily allowance. Set
    GEOLOCEVAL_NOMINATIM_EMAIL so requests identify their sender.
    """

    name = "nominatim"
    default_endpoint = "https://nominatim.openstreetmap.org/reverse"
    max_per_second = 1.0
    default_budget = 2500
    EMAIL_ENV = "GEOLOCEVAL_NOMINATIM_EMAIL"

    _CITY_KEYS = ("city", "town", "village", "municipality", "hamlet")

    def resolve(self, point: GeoPoint) -> AdminPath | None:
        params = {
            "lat": f"{point.lat:.7f}",
            "lon": f"{point.lon:.7f}",
            "format": "jsonv2",
            "addressdetails": 1,
        }
        email = os.environ.get(self.EMAIL_ENV)
        if email:
            params["email"] = email
        payload = self._get(params)
        if "error" in payload:
            return None
        address = payload.get("address") or {}
        country = self._label(address.get("country"))
        if country is None:
            return None
        city = None
        for key in self._CITY_KEYS:
            city = self._label(address.get(key))
            if city:
                break
        return AdminPath(
            country=country,
            state=self._label(address.get("state")),
            county=self._label(address.get("county")),
            city=city,
        )

    def _headers(self) -> dict:
        return {"User-Agent": "geoloceval/0.1"}


class GoogleV3Provider(_HttpProvider):
    """Google Geocoding API v3 reverse geocoder (commercial tier).

    Requires an API key in GEOLOCEVAL_GOOGLE_API_KEY; never passed on the
    command line.
    """

    name = "googlev3"
    default_endpoint = "https://maps.googleapis.com/maps/api/geocode/json"
    max_per_second = 50.0
    default_budget = 100_000
    KEY_ENV = "GEOLOCEVAL_GOOGLE_API_KEY"

    _LEVELS = {
        "locality": "city",
        "administrative_area_level_2": "county",
        "administrative_area_level_1": "state",
        "country": "country",
    }

    def resolve(self, point: GeoPoint) -> AdminPath | None:
        key = os.environ.get(self.KEY_ENV)
        if not key:
            raise ConfigError(f"googlev3 provider requires {self.KEY_ENV} in the environment")
        payload = self._get({"latlng": f"{point.lat:.7f},{point.lon:.7f}", "key": key})
        status = payload.get("status")
        if status == "ZERO_RESULTS":
            return None
        if status != "OK":
            raise GeocodeError(f"googlev3 returned status {status!r}")
        labels: dict[str, str | None] = {v: None for v in self._LEVELS.values()}
        for result in payload.get("results", []):
            for component in result.get("address_components", []):
                for gtype in component.get("types", []):
                    level = self._LEVELS.get(gtype)
                    if level and labels[level] is None:
                        labels[level] = self._label(component.get("long_name"))
        if labels["country"] is None:
            return None
        return AdminPath(**labels)


@dataclass(frozen=True)
class ResolvedRecord:
    """One prediction joined with its resolution and truth distance.

    ``point`` and ``error_dist`` are None for label-only pseudo-systems
    (the class baselines), which never carry coordinates.
    """

    doc_id: str
    point: GeoPoint | None
    path: AdminPath
    error_dist: float | None


def resolve_points(
    points: Iterable[GeoPoint],
    provider,
    cache: GeocodeCache,
    workers: int = 1,
    cache_path: str | None = None,
    flush_every: int = 200,
) -> dict[CacheKey, AdminPath]:
    """Resolve unique points through the cache, querying the provider on misses.

    Misses are deduplicated by cache key before any provider traffic. The
    cache file, when given, is persisted incrementally and on abort so a
    failed run keeps its progress.
    """
    wanted: dict[CacheKey, GeoPoint] = {}
    for point in points:
        wanted.setdefault(cache_key(point), point)

    resolved: dict[CacheKey, AdminPath] = {}
    missing: dict[CacheKey, GeoPoint] = {}
    for key, point in wanted.items():
        hit = cache.get(key)
        if hit is not None:
            resolved[key] = hit
        else:
            missing[key] = point

    if not missing:
        return resolved

    def finish(key: CacheKey, path: AdminPath | None) -> None:
        final = UNRESOLVED_PATH if path is None else path
        cache.put(key, final)
        resolved[key] = final
        if cache_path is not None and cache._dirty >= flush_every:
            store_cache(cache, cache_path)

    try:
        if hasattr(provider, "resolve_many"):
            keys = list(missing)
            paths = provider.resolve_many([missing[k] for k in keys])
            for key, path in zip(keys, paths):
                finish(key, path)
        elif workers > 1:
            keys = list(missing)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for key, path in zip(
                    keys, pool.map(provider.resolve, (missing[k] for k in keys))
                ):
                    finish(key, path)
        else:
            for key, point in missing.items():
                finish(key, provider.resolve(point))
    finally:
        if cache_path is not None and cache._dirty:
            store_cache(cache, cache_path)
    return resolved


def reverse_geocode(provider, cache: GeocodeCache, point: GeoPoint) -> AdminPath:
    """Resolve one point: cache first, provider on a miss, result cached."""
    return resolve_points([point], provider, cache)[cache_key(point)]


def resolve_run(
    run: PredictionRun,
    truth: GroundTruth,
    provider,
    cache: GeocodeCache,
    workers: int = 1,
    cache_path: str | None = None,
) -> list[ResolvedRecord]:
    """Resolve one aligned run into records with paths and error distances.

    Records come back in sorted doc_id order. Sentinel gaps (policy "wrong")
    materialize at the truth antipode: maximal error distance and the
    reserved unresolved path, wrong at every granularity.
    """
    doc_ids = sorted(set(run.predictions) | set(run.sentinel_ids))
    real_ids = [d for d in doc_ids if d not in run.sentinel_ids]
    paths = resolve_points(
        (run.predictions[d] for d in real_ids),
        provider, cache, workers=workers, cache_path=cache_path,
    )
    lat1 = array("d", (run.predictions[d].lat for d in real_ids))
    lon1 = array("d", (run.predictions[d].lon for d in real_ids))
    lat2 = array("d", (truth.records[d].home.lat for d in real_ids))
    lon2 = array("d", (truth.records[d].home.lon for d in real_ids))
    dists = dict(zip(real_ids, _kernels.haversine_pairs(lat1, lon1, lat2, lon2)))

    records = []
    for doc_id in doc_ids:
        if doc_id in run.sentinel_ids:
            records.append(
                ResolvedRecord(
                    doc_id=doc_id,
                    point=truth.records[doc_id].home.antipode(),
                    path=UNRESOLVED_PATH,
                    error_dist=MAX_ERROR_DISTANCE_KM,
                )
            )
        else:
            point = run.predictions[doc_id]
            records.append(
                ResolvedRecord(
                    doc_id=doc_id,
                    point=point,
                    path=paths[cache_key(point)],
                    error_dist=dists[doc_id],
                )
            )
    return records


def resolve_truth(
    truth: GroundTruth,
    provider,
    cache: GeocodeCache,
    workers: int = 1,
    cache_path: str | None = None,
) -> GroundTruth:
    """Fill in truth paths for records the input file left unresolved."""
    pending = truth.unresolved_ids()
    if not pending:
        return truth
    paths = resolve_points(
        (truth.records[d].home for d in pending),
        provider, cache, workers=workers, cache_path=cache_path,
    )
    return truth.with_paths(
        {d: paths[cache_key(truth.records[d].home)] for d in pending}
    )
