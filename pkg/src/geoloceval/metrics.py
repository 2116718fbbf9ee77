"""Evaluation metrics over resolved records, plus the two trivial baselines.

Continuous metrics (median/mean error distance) come from raw coordinate
error; discrete metrics (accuracy, precision/recall/F1 under micro and macro
averaging) from resolved locations compared at a granularity; the mixed
metric counts predictions within a distance threshold of the truth.
"""
from __future__ import annotations

import random
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError
from .geo import AdminPath, Granularity, path_sort_key
from .geocode import ResolvedRecord
from .ingest import GroundTruth

DEFAULT_THRESHOLD_KM = 161.0
DEFAULT_AUC_RANGE_KM = 10_000.0


@dataclass(frozen=True)
class ConfusionTally:
    """Per-location true/false positive and false negative counts.

    The location universe is the set of distinct ground-truth locations at
    the tally's granularity, so it is identical for every system evaluated
    against the same truth. Predictions outside the universe count as a false
    negative for the true location and are tracked in ``fp_outside`` so that
    global totals stay exact.
    """

    granularity: Granularity
    tp: dict[tuple, int]
    fp: dict[tuple, int]
    fn: dict[tuple, int]
    fp_outside: int
    n_users: int

    @property
    def universe(self) -> list[tuple]:
        return sorted(self.tp, key=path_sort_key)

    @property
    def tp_total(self) -> int:
        return sum(self.tp.values())


def tally(
    records: Sequence[ResolvedRecord], truth: GroundTruth, granularity: Granularity
) -> ConfusionTally:
    """Count per-location confusion at a granularity for one run."""
    universe = {rec.path.key(granularity) for rec in truth.records.values() if rec.path}
    tp = {key: 0 for key in universe}
    fp = {key: 0 for key in universe}
    fn = {key: 0 for key in universe}
    fp_outside = 0
    for record in records:
        true_path = truth.records[record.doc_id].path
        if true_path is None:
            raise ValidationError(
                f"ground truth for {record.doc_id!r} is unresolved; geocode it first"
            )
        true_key = true_path.key(granularity)
        pred_key = record.path.key(granularity)
        if pred_key == true_key:
            tp[true_key] += 1
        else:
            fn[true_key] += 1
            if pred_key in fp:
                fp[pred_key] += 1
            else:
                fp_outside += 1
    return ConfusionTally(
        granularity=granularity, tp=tp, fp=fp, fn=fn,
        fp_outside=fp_outside, n_users=len(records),
    )


def accuracy(t: ConfusionTally) -> float:
    if t.n_users == 0:
        raise ValidationError("cannot score an empty evaluation")
    return t.tp_total / t.n_users


def micro_prf(t: ConfusionTally) -> tuple[float, float, float]:
    """Micro-averaged precision, recall, F1.

    With one label per document, global predicted and true totals both equal
    n_users, so all three collapse to accuracy exactly.
    """
    if t.n_users == 0:
        raise ValidationError("cannot score an empty evaluation")
    predicted_total = t.tp_total + sum(t.fp.values()) + t.fp_outside
    true_total = t.tp_total + sum(t.fn.values())
    p = t.tp_total / predicted_total
    r = t.tp_total / true_total
    if p == r:  # always true with one prediction per document; keeps f1 == acc exact
        return p, r, p
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f1


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def per_location_prf(t: ConfusionTally) -> dict[tuple, tuple[float, float, float]]:
    """(precision, recall, F1) per universe location, keyed by location."""
    return {
        key: _prf(t.tp[key], t.fp[key], t.fn[key]) for key in t.universe
    }


def macro_prf(t: ConfusionTally) -> tuple[float, float, float]:
    """Unweighted mean of per-location precision, recall and F1."""
    if not t.tp:
        raise ValidationError("macro averaging needs a non-empty location universe")
    per_loc = per_location_prf(t)
    n = len(per_loc)
    p = sum(v[0] for v in per_loc.values()) / n
    r = sum(v[1] for v in per_loc.values()) / n
    f1 = sum(v[2] for v in per_loc.values()) / n
    return p, r, f1


def median_error(dists: Sequence[float]) -> float:
    if not dists:
        raise ValidationError("no error distances to aggregate")
    return float(statistics.median(dists))


def mean_error(dists: Sequence[float]) -> float:
    if not dists:
        raise ValidationError("no error distances to aggregate")
    return sum(dists) / len(dists)


def acc_at(dists: Sequence[float], threshold_km: float = DEFAULT_THRESHOLD_KM) -> float:
    """Fraction of predictions within the threshold (inclusive boundary)."""
    if not dists:
        raise ValidationError("no error distances to aggregate")
    if threshold_km <= 0:
        raise ValidationError(f"threshold must be positive, got {threshold_km}")
    return sum(1 for d in dists if d <= threshold_km) / len(dists)


def cdf(dists: Sequence[float]) -> list[tuple[float, float]]:
    """Step points (x_km, fraction of predictions with distance <= x)."""
    if not dists:
        raise ValidationError("no error distances to aggregate")
    n = len(dists)
    points = []
    seen = 0
    for x, count in sorted(Counter(dists).items()):
        seen += count
        points.append((x, seen / n))
    return points


def auc(dists: Sequence[float], range_km: float = DEFAULT_AUC_RANGE_KM) -> float:
    """Area under the error-distance CDF over [0, range_km], scaled to [0, 1].

    1.0 means every prediction is exact; 0.0 means everything lies beyond the
    range.
    """
    if range_km <= 0:
        raise ValidationError(f"range must be positive, got {range_km}")
    area = 0.0
    prev_x = 0.0
    frac = 0.0
    for x, cum in cdf(dists):
        if x > range_km:
            break
        area += frac * (x - prev_x)
        prev_x, frac = x, cum
    area += frac * (range_km - prev_x)
    return area / range_km


@dataclass(frozen=True)
class MetricVector:
    """All metrics for one system at one granularity.

    Distance-based fields are None for label-only pseudo-systems (the class
    baselines), which have no coordinates to measure.
    """

    granularity: Granularity
    acc: float
    p_micro: float
    r_micro: float
    f1_micro: float
    p_macro: float
    r_macro: float
    f1_macro: float
    acc_at: float | None
    median_km: float | None
    mean_km: float | None


# Column identity order for score tables and rank correlations.
METRIC_IDS = (
    "acc", "acc@x", "p_micro", "r_micro", "f1_micro",
    "p_macro", "r_macro", "f1_macro", "median", "mean",
)
DISTANCE_METRIC_IDS = ("median", "mean")


def metric_value(vector: MetricVector, metric_id: str) -> float | None:
    return {
        "acc": vector.acc,
        "acc@x": vector.acc_at,
        "p_micro": vector.p_micro,
        "r_micro": vector.r_micro,
        "f1_micro": vector.f1_micro,
        "p_macro": vector.p_macro,
        "r_macro": vector.r_macro,
        "f1_macro": vector.f1_macro,
        "median": vector.median_km,
        "mean": vector.mean_km,
    }[metric_id]


def score_run(
    records: Sequence[ResolvedRecord],
    truth: GroundTruth,
    granularity: Granularity,
    threshold_km: float = DEFAULT_THRESHOLD_KM,
) -> MetricVector:
    """Full metric vector for one run at one granularity."""
    t = tally(records, truth, granularity)
    acc = accuracy(t)
    p_mi, r_mi, f1_mi = micro_prf(t)
    p_ma, r_ma, f1_ma = macro_prf(t)
    dists = [r.error_dist for r in records if r.error_dist is not None]
    if len(dists) == len(records) and dists:
        acc_x, med, mean = acc_at(dists, threshold_km), median_error(dists), mean_error(dists)
    else:
        acc_x = med = mean = None
    return MetricVector(
        granularity=granularity, acc=acc,
        p_micro=p_mi, r_micro=r_mi, f1_micro=f1_mi,
        p_macro=p_ma, r_macro=r_ma, f1_macro=f1_ma,
        acc_at=acc_x, median_km=med, mean_km=mean,
    )


def correctness_vector(
    records: Sequence[ResolvedRecord], truth: GroundTruth, granularity: Granularity
) -> list[bool]:
    """Per-document correctness in record order; input to the micro sign test."""
    out = []
    for record in records:
        true_path = truth.records[record.doc_id].path
        out.append(true_path is not None and record.path.matches_at(true_path, granularity))
    return out


def _key_to_path(key: tuple) -> AdminPath:
    labels = list(key) + [None] * (4 - len(key))
    return AdminPath(country=labels[0], state=labels[1], county=labels[2], city=labels[3])


def _truth_class_counts(truth: GroundTruth, granularity: Granularity) -> Counter:
    counts: Counter = Counter()
    for rec in truth.records.values():
        if rec.path is None:
            raise ValidationError("baseline training needs fully resolved ground truth")
        counts[rec.path.key(granularity)] += 1
    return counts


def majority_class_run(
    truth_train: GroundTruth, granularity: Granularity
) -> list[ResolvedRecord]:
    """Baseline predicting the most frequent training location for every doc.

    Ties on frequency break lexicographically on the location tuple. Emits
    labels only: distance metrics do not apply to a class-output baseline.
    """
    counts = _truth_class_counts(truth_train, granularity)
    if not counts:
        raise ValidationError("baseline training set is empty")
    best_count = max(counts.values())
    winner = min(
        (key for key, count in counts.items() if count == best_count),
        key=path_sort_key,
    )
    path = _key_to_path(winner)
    return [
        ResolvedRecord(doc_id=doc_id, point=None, path=path, error_dist=None)
        for doc_id in sorted(truth_train.records)
    ]


def stratified_sampling_run(
    truth_train: GroundTruth, granularity: Granularity, seed: int
) -> list[ResolvedRecord]:
    """Baseline sampling each prediction in proportion to training frequency."""
    counts = _truth_class_counts(truth_train, granularity)
    if not counts:
        raise ValidationError("baseline training set is empty")
    classes = sorted(counts, key=path_sort_key)
    weights = [counts[key] for key in classes]
    rng = random.Random(seed)
    doc_ids = sorted(truth_train.records)
    drawn = rng.choices(classes, weights=weights, k=len(doc_ids))
    return [
        ResolvedRecord(doc_id=doc_id, point=None, path=_key_to_path(key), error_dist=None)
        for doc_id, key in zip(doc_ids, drawn)
    ]
