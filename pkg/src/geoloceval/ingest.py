"""Parse, validate, and align prediction files and ground truth.

Input wire format: a UTF-8 JSON document mapping each doc_id to an object
with "lon" and "lat" fields. Coordinates are accepted as bare numbers or as
number-bearing strings; output is always bare numbers. Ground truth uses the
same shape, optionally extended per record with "city", "county", "state"
and "country" labels, which lets pre-resolved truth bypass geocoding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from .errors import CoverageError, ParseError, ValidationError
from .geo import AdminPath, GeoPoint

_LABEL_FIELDS = ("city", "county", "state", "country")


@dataclass(frozen=True)
class PredictionRun:
    """One system's predictions: doc_id -> point.

    ``sentinel_ids`` marks documents this run failed to cover that alignment
    materialized as guaranteed-wrong predictions (policy "wrong").
    """

    system_name: str
    predictions: dict[str, GeoPoint]
    sentinel_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class TruthRecord:
    home: GeoPoint
    path: AdminPath | None = None  # None until reverse geocoding fills it


@dataclass(frozen=True)
class GroundTruth:
    records: dict[str, TruthRecord]

    def unresolved_ids(self) -> list[str]:
        return [doc_id for doc_id, rec in self.records.items() if rec.path is None]

    def with_paths(self, paths: Mapping[str, AdminPath]) -> GroundTruth:
        records = dict(self.records)
        for doc_id, path in paths.items():
            records[doc_id] = TruthRecord(home=records[doc_id].home, path=path)
        return GroundTruth(records=records)


@dataclass(frozen=True)
class AlignedDataset:
    """Ground truth joined with every run over one shared, ordered doc set."""

    doc_ids: tuple[str, ...]
    truth: GroundTruth
    runs: tuple[PredictionRun, ...]
    dropped_extra: dict[str, int] = field(default_factory=dict)


def _reject_duplicate_keys(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise ValidationError(f"duplicate key {key!r}")
        obj[key] = value
    return obj


def _reject_constant(token):
    raise ParseError(f"non-finite JSON constant {token!r} not allowed")


def _load_document(source: bytes | str | IO) -> dict:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            text = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8: {exc.reason}", exc.start) from exc
    else:
        text = source
    try:
        doc = json.loads(
            text,
            object_pairs_hook=_reject_duplicate_keys,
            parse_constant=_reject_constant,
        )
    except json.JSONDecodeError as exc:
        # exc.pos counts characters; report the byte position in the document
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", offset) from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be a map from doc_id to record")
    return doc


def _coordinate(record: dict, name: str, doc_id: str) -> float:
    if name not in record:
        raise ParseError(f"record {doc_id!r} is missing {name!r}")
    value = record[name]
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ParseError(f"record {doc_id!r}: {name!r} is not numeric: {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"record {doc_id!r}: {name!r} must be a number, got {value!r}")
    return float(value)


def _point(record: dict, doc_id: str) -> GeoPoint:
    lon = _coordinate(record, "lon", doc_id)
    lat = _coordinate(record, "lat", doc_id)
    try:
        return GeoPoint(lat=lat, lon=lon)
    except ValueError as exc:
        raise ValidationError(f"record {doc_id!r}: {exc}") from None


def parse_predictions(source: bytes | str | IO, system_name: str) -> PredictionRun:
    """Parse one system's prediction file into a run."""
    doc = _load_document(source)
    predictions = {}
    for doc_id, record in doc.items():
        if not isinstance(record, dict):
            raise ParseError(f"record {doc_id!r} must be an object")
        predictions[doc_id] = _point(record, doc_id)
    return PredictionRun(system_name=system_name, predictions=predictions)


def _labels(record: dict, doc_id: str) -> AdminPath | None:
    values = {}
    for name in _LABEL_FIELDS:
        value = record.get(name)
        if value is None:
            values[name] = None
            continue
        if not isinstance(value, str):
            raise ParseError(f"record {doc_id!r}: {name!r} must be text, got {value!r}")
        values[name] = value
    if all(v is None for v in values.values()):
        return None
    try:
        return AdminPath(**values)
    except ValueError as exc:
        raise ValidationError(f"record {doc_id!r}: {exc}") from None


def parse_ground_truth(source: bytes | str | IO) -> GroundTruth:
    """Parse ground truth; records without labels stay queued for geocoding."""
    doc = _load_document(source)
    records = {}
    for doc_id, record in doc.items():
        if not isinstance(record, dict):
            raise ParseError(f"record {doc_id!r} must be an object")
        records[doc_id] = TruthRecord(home=_point(record, doc_id), path=_labels(record, doc_id))
    return GroundTruth(records=records)


def serialize_predictions(run: PredictionRun) -> str:
    """Canonical emission of a run: bare numbers, lon before lat."""
    obj = {
        doc_id: {"lon": point.lon, "lat": point.lat}
        for doc_id, point in run.predictions.items()
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def align(
    truth: GroundTruth,
    runs: Iterable[PredictionRun],
    missing_policy: str = "error",
) -> AlignedDataset:
    """Join ground truth with every run over the truth document set.

    Under policy "error", any run lacking a truth doc_id aborts. Under policy
    "wrong", gaps become sentinel predictions that score incorrect at every
    granularity with maximal error distance. Predictions for unknown doc_ids
    are dropped and counted.
    """
    runs = list(runs)
    if not runs:
        raise ValidationError("at least one prediction run is required")
    if missing_policy not in ("error", "wrong"):
        raise ValidationError(f"unknown missing policy {missing_policy!r}")
    names = [run.system_name for run in runs]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate system name(s): {', '.join(dupes)}")

    truth_ids = set(truth.records)
    doc_ids = tuple(sorted(truth_ids))
    aligned = []
    dropped = {}
    for run in runs:
        run_ids = set(run.predictions) | set(run.sentinel_ids)
        missing = truth_ids - run_ids
        extra = set(run.predictions) - truth_ids
        if missing and missing_policy == "error":
            raise CoverageError(run.system_name, sorted(missing))
        aligned.append(
            PredictionRun(
                system_name=run.system_name,
                predictions={
                    doc_id: run.predictions[doc_id]
                    for doc_id in doc_ids
                    if doc_id in run.predictions
                },
                sentinel_ids=frozenset(run.sentinel_ids) | frozenset(missing),
            )
        )
        if extra:
            dropped[run.system_name] = len(extra)
    return AlignedDataset(doc_ids=doc_ids, truth=truth, runs=tuple(aligned), dropped_extra=dropped)
