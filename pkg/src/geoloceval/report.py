"""End-to-end orchestration: resolve, score, test, correlate, emit.

One invocation produces a fixed-name output directory: resolved.json (the
nested per-document records file, sufficient to reproduce every number),
scores.tsv, tests.tsv, correlations.tsv, agreement.tsv, boxplot.tsv,
cdf.tsv, meta.json (deterministic run metadata) and run_info.json (volatile
diagnostics: wall time, cache traffic). Emission is atomic: files are staged
in a temp directory and renamed into place, so a failed run leaves nothing.
"""
from __future__ import annotations

import json
import os
import shutil
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

from . import __version__
from ._kernels import BACKEND
from .errors import ConfigError, ValidationError
from .geo import (
    EARTH_RADIUS_KM,
    AdminPath,
    GeoPoint,
    Granularity,
    UNRESOLVED_PATH,
)
from .geocode import (
    CACHE_KEY_DECIMALS,
    Gazetteer,
    GazetteerProvider,
    GeocodeCache,
    GoogleV3Provider,
    NominatimProvider,
    ResolvedRecord,
    load_cache,
    resolve_run,
    resolve_truth,
    store_cache,
)
from .ingest import (
    GroundTruth,
    TruthRecord,
    align,
    parse_ground_truth,
    parse_predictions,
)
from .metrics import (
    DEFAULT_THRESHOLD_KM,
    METRIC_IDS,
    DISTANCE_METRIC_IDS,
    MetricVector,
    correctness_vector,
    majority_class_run,
    metric_value,
    per_location_prf,
    score_run,
    stratified_sampling_run,
    tally,
)
from .stats import (
    DEFAULT_ALPHA,
    SIGN_TEST_EXACT_LIMIT,
    TAU_EXACT_LIMIT,
    WILCOXON_EXACT_LIMIT,
    AgreementSummary,
    RankCorrelation,
    TestResult,
    kendall_tau_b,
    macro_sign_test,
    macro_t_test,
    micro_sign_test,
    proportions_z_test,
    ssa_ssd,
    wilcoxon_test,
)

GROUND_TRUTH_NAME = "ground_truth"
BASELINE_NAMES = {"mc": "mc-baseline", "ss": "ss-baseline"}
DEFAULT_CLIP_KM = 6000.0

OUTPUT_FILES = (
    "resolved.json", "scores.tsv", "tests.tsv", "correlations.tsv",
    "agreement.tsv", "boxplot.tsv", "cdf.tsv", "meta.json", "run_info.json",
)

# Test+metric combinations, mirroring the micro/macro suite: the sign test on
# raw decisions, the z-test on proportion metrics, and the three macro tests
# on per-location precision/recall/F1.
TEST_COMBOS: tuple[tuple[str, str], ...] = (
    ("s", "raw"),
    ("p", "acc"), ("p", "p_micro"), ("p", "r_micro"),
    ("S", "p_macro"), ("S", "r_macro"), ("S", "f1_macro"),
    ("T", "p_macro"), ("T", "r_macro"), ("T", "f1_macro"),
    ("T'", "p_macro"), ("T'", "r_macro"), ("T'", "f1_macro"),
)

CROSS_GRANULARITY_METRICS = tuple(
    m for m in METRIC_IDS if m not in DISTANCE_METRIC_IDS
)


def combo_label(test_id: str, metric_id: str) -> str:
    return f"{test_id}-{metric_id}"


@dataclass
class EvalConfig:
    truth_path: str
    run_paths: list[str]
    out_dir: str
    system_names: list[str] | None = None
    provider: str = "offline"
    endpoint: str | None = None
    requests_per_day: int | None = None
    cache_path: str | None = None
    gazetteer_path: str | None = None
    granularities: tuple[Granularity, ...] = tuple(Granularity)
    threshold_km: float = DEFAULT_THRESHOLD_KM
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    missing_policy: str = "error"
    baselines: tuple[str, ...] = ()
    workers: int = 1
    clip_km: float = DEFAULT_CLIP_KM
    rebuild_cache: bool = False

    def validate(self) -> None:
        if not self.run_paths:
            raise ConfigError("at least one --run file is required")
        for path in [self.truth_path, *self.run_paths]:
            if not os.path.exists(path):
                raise ConfigError(f"input file not found: {path}")
        if self.provider not in ("offline", "nominatim", "googlev3"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.provider == "offline":
            if not self.gazetteer_path:
                raise ConfigError("offline provider requires --gazetteer")
            if not os.path.exists(self.gazetteer_path):
                raise ConfigError(f"gazetteer not found: {self.gazetteer_path}")
        if not self.granularities:
            raise ConfigError("at least one granularity is required")
        if len(set(self.granularities)) != len(self.granularities):
            raise ConfigError("duplicate granularity")
        if self.threshold_km <= 0:
            raise ConfigError(f"--threshold-km must be positive, got {self.threshold_km}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"--alpha must lie in (0, 1), got {self.alpha}")
        if self.missing_policy not in ("error", "wrong"):
            raise ConfigError(f"--missing must be 'error' or 'wrong', got {self.missing_policy!r}")
        for baseline in self.baselines:
            if baseline not in BASELINE_NAMES:
                raise ConfigError(f"unknown baseline {baseline!r} (choose mc or ss)")
        if len(set(self.baselines)) != len(self.baselines):
            raise ConfigError("duplicate baseline")
        if self.workers < 1:
            raise ConfigError(f"--workers must be at least 1, got {self.workers}")
        if self.clip_km <= 0:
            raise ConfigError(f"--clip-km must be positive, got {self.clip_km}")
        if self.requests_per_day is not None and self.requests_per_day < 1:
            raise ConfigError("--requests-per-day must be at least 1")
        if self.system_names is not None and len(self.system_names) != len(self.run_paths):
            raise ConfigError("--system-name must be given once per --run")

    def resolved_system_names(self) -> list[str]:
        if self.system_names is not None:
            names = list(self.system_names)
        else:
            names = [Path(p).stem for p in self.run_paths]
        reserved = {GROUND_TRUTH_NAME, *BASELINE_NAMES.values()}
        for name in names:
            if name in reserved:
                raise ConfigError(f"system name {name!r} is reserved")
        return names

    def ordered_granularities(self) -> tuple[Granularity, ...]:
        return tuple(g for g in Granularity if g in self.granularities)

    def echo(self) -> dict:
        # out_dir is excluded: it affects where files land, not any number,
        # and keeping it out makes meta.json identical across re-runs.
        return {
            "truth": self.truth_path,
            "runs": list(self.run_paths),
            "system_names": self.resolved_system_names(),
            "provider": self.provider,
            "endpoint": self.endpoint,
            "requests_per_day": self.requests_per_day,
            "cache": self.cache_path,
            "gazetteer": self.gazetteer_path,
            "granularities": [g.label for g in self.ordered_granularities()],
            "threshold_km": self.threshold_km,
            "alpha": self.alpha,
            "seed": self.seed,
            "missing_policy": self.missing_policy,
            "baselines": list(self.baselines),
            "workers": self.workers,
            "clip_km": self.clip_km,
        }


@dataclass
class EvalReport:
    config: EvalConfig
    systems: tuple[str, ...]
    granularities: tuple[Granularity, ...]
    doc_ids: tuple[str, ...]
    truth: GroundTruth
    records: dict[str, list[ResolvedRecord]]
    scores: dict[tuple[str, Granularity], MetricVector]
    tests: dict[tuple[Granularity, str], list[TestResult]]
    correlations: dict[str, list[RankCorrelation]]  # scope label -> results
    agreements: dict[Granularity, list[AgreementSummary]]
    meta: dict
    run_info: dict = field(default_factory=dict)


def _make_provider(config: EvalConfig):
    if config.provider == "offline":
        return GazetteerProvider(Gazetteer.load(config.gazetteer_path))
    cls = NominatimProvider if config.provider == "nominatim" else GoogleV3Provider
    return cls(endpoint=config.endpoint, daily_budget=config.requests_per_day)


def _score_all(
    records: dict[str, list[ResolvedRecord]],
    truth: GroundTruth,
    granularities: tuple[Granularity, ...],
    threshold_km: float,
) -> dict[tuple[str, Granularity], MetricVector]:
    return {
        (name, g): score_run(recs, truth, g, threshold_km)
        for name, recs in records.items()
        for g in granularities
    }


def _pairwise_tests(
    systems: tuple[str, ...],
    records: dict[str, list[ResolvedRecord]],
    scores: dict[tuple[str, Granularity], MetricVector],
    truth: GroundTruth,
    granularities: tuple[Granularity, ...],
) -> dict[tuple[Granularity, str], list[TestResult]]:
    n_docs = len(next(iter(records.values())))
    out: dict[tuple[Granularity, str], list[TestResult]] = {}
    for g in granularities:
        correct = {name: correctness_vector(records[name], truth, g) for name in systems}
        per_loc = {}
        for name in systems:
            t = tally(records[name], truth, g)
            prf = per_location_prf(t)
            universe = t.universe
            per_loc[name] = {
                "p_macro": [prf[k][0] for k in universe],
                "r_macro": [prf[k][1] for k in universe],
                "f1_macro": [prf[k][2] for k in universe],
            }
        for test_id, metric_id in TEST_COMBOS:
            results = []
            for a, b in combinations(systems, 2):
                kwargs = dict(
                    metric_id=metric_id, granularity=g, system_a=a, system_b=b
                )
                if test_id == "s":
                    result = micro_sign_test(correct[a], correct[b], **kwargs)
                elif test_id == "p":
                    result = proportions_z_test(
                        metric_value(scores[(a, g)], metric_id),
                        metric_value(scores[(b, g)], metric_id),
                        n_docs, **kwargs,
                    )
                elif test_id == "S":
                    result = macro_sign_test(per_loc[a][metric_id], per_loc[b][metric_id], **kwargs)
                elif test_id == "T":
                    if len(per_loc[a][metric_id]) < 2:
                        # one-location universe: df would be zero, so the t-test
                        # can offer no evidence; recorded as degenerate
                        result = TestResult(
                            "T", metric_id, g, a, b, statistic=0.0, p_value=1.0,
                            direction="none", n_effective=len(per_loc[a][metric_id]),
                            method="t", degenerate=True,
                        )
                    else:
                        result = macro_t_test(
                            per_loc[a][metric_id], per_loc[b][metric_id], **kwargs
                        )
                else:
                    result = wilcoxon_test(per_loc[a][metric_id], per_loc[b][metric_id], **kwargs)
                results.append(result)
            out[(g, combo_label(test_id, metric_id))] = results
    return out


def _correlation(
    systems: tuple[str, ...],
    scores: dict[tuple[str, Granularity], MetricVector],
    metric_x: str,
    gx: Granularity,
    metric_y: str,
    gy: Granularity,
    label_x: str,
    label_y: str,
) -> RankCorrelation:
    xs, ys = [], []
    for name in systems:
        vx = metric_value(scores[(name, gx)], metric_x)
        vy = metric_value(scores[(name, gy)], metric_y)
        if vx is None or vy is None:
            continue
        xs.append(vx)
        ys.append(vy)
    excluded = len(systems) - len(xs)
    if len(xs) < 2:
        return RankCorrelation(label_x, label_y, None, None, len(xs), excluded)
    return kendall_tau_b(xs, ys, metric_x=label_x, metric_y=label_y, n_excluded=excluded)


def _correlations(
    systems: tuple[str, ...],
    scores: dict[tuple[str, Granularity], MetricVector],
    granularities: tuple[Granularity, ...],
) -> dict[str, list[RankCorrelation]]:
    out: dict[str, list[RankCorrelation]] = {}
    for g in granularities:
        results = []
        for mx, my in combinations(METRIC_IDS, 2):
            results.append(_correlation(systems, scores, mx, g, my, g, mx, my))
        out[g.label] = results
    # Across city and country every metric pairs with every metric; distance
    # metrics are excluded because granularity does not apply to them.
    if Granularity.CITY in granularities and Granularity.COUNTRY in granularities:
        results = []
        for mx in CROSS_GRANULARITY_METRICS:
            for my in CROSS_GRANULARITY_METRICS:
                results.append(
                    _correlation(
                        systems, scores, mx, Granularity.CITY, my, Granularity.COUNTRY,
                        f"city:{mx}", f"country:{my}",
                    )
                )
        out["city~country"] = results
    return out


def _agreements(
    tests: dict[tuple[Granularity, str], list[TestResult]],
    granularities: tuple[Granularity, ...],
    alpha: float,
) -> dict[Granularity, list[AgreementSummary]]:
    labels = [combo_label(t, m) for t, m in TEST_COMBOS]
    out: dict[Granularity, list[AgreementSummary]] = {}
    for g in granularities:
        summaries = []
        if tests[(g, labels[0])]:  # pairwise analysis needs at least two systems
            for i, x in enumerate(labels):
                for y in labels[i:]:
                    summaries.append(
                        ssa_ssd(tests[(g, x)], tests[(g, y)], alpha, combo_x=x, combo_y=y)
                    )
        out[g] = summaries
    return out


def _baseline_records(
    config: EvalConfig, truth: GroundTruth, doc_ids: tuple[str, ...]
) -> dict[str, list[ResolvedRecord]]:
    finest = config.ordered_granularities()[0]
    out = {}
    for baseline in config.baselines:
        name = BASELINE_NAMES[baseline]
        if baseline == "mc":
            records = majority_class_run(truth, finest)
        else:
            records = stratified_sampling_run(truth, finest, config.seed)
        by_id = {r.doc_id: r for r in records}
        out[name] = [by_id[d] for d in doc_ids]
    return out


def _deterministic_meta(config: EvalConfig, report_stats: dict) -> dict:
    return {
        "tool": {"name": "geoloceval", "version": __version__},
        "config": config.echo(),
        "conventions": {
            "error_dist_unit": "km",
            "earth_radius_km": EARTH_RADIUS_KM,
            "distance_formula": "haversine",
            "longitude_domain": "(-180, 180]",
            "cache_key_decimals": CACHE_KEY_DECIMALS,
            "acc_at_boundary": "inclusive",
            "median_even_count": "midpoint of the two central values",
            "macro_universe": "distinct ground-truth locations per granularity",
            "zero_denominator_score": 0.0,
            "proportions_test": "pooled two-proportion z",
            "two_sided_tests": True,
            "sign_test_exact_limit": SIGN_TEST_EXACT_LIMIT,
            "wilcoxon_exact_limit": WILCOXON_EXACT_LIMIT,
            "tau_exact_permutation_limit": TAU_EXACT_LIMIT,
            "quartiles": "linear interpolation between closest ranks (inclusive)",
            "missing_prediction_sentinel": "antipode point, unresolved path, max distance",
        },
        **report_stats,
    }


def run_evaluation(config: EvalConfig) -> EvalReport:
    """Execute the full pipeline: parse, align, resolve, score, test, correlate."""
    config.validate()
    started = time.monotonic()
    names = config.resolved_system_names()
    granularities = config.ordered_granularities()

    with open(config.truth_path, "rb") as handle:
        truth = parse_ground_truth(handle)
    if not truth.records:
        raise ValidationError("ground truth is empty")
    runs = []
    for path, name in zip(config.run_paths, names):
        with open(path, "rb") as handle:
            runs.append(parse_predictions(handle, name))
    dataset = align(truth, runs, config.missing_policy)

    if config.cache_path and not config.rebuild_cache:
        cache = load_cache(config.cache_path)
    else:
        cache = GeocodeCache()
    provider = _make_provider(config)

    truth = resolve_truth(
        dataset.truth, provider, cache,
        workers=config.workers, cache_path=config.cache_path,
    )
    records: dict[str, list[ResolvedRecord]] = {}
    for run in dataset.runs:
        records[run.system_name] = resolve_run(
            run, truth, provider, cache,
            workers=config.workers, cache_path=config.cache_path,
        )
    if config.cache_path:
        store_cache(cache, config.cache_path)

    records.update(_baseline_records(config, truth, dataset.doc_ids))
    systems = tuple(records)

    scores = _score_all(records, truth, granularities, config.threshold_km)
    tests = _pairwise_tests(systems, records, scores, truth, granularities)
    correlations = _correlations(systems, scores, granularities)
    agreements = _agreements(tests, granularities, config.alpha)

    n_locations = {
        g.label: len({r.path.key(g) for r in truth.records.values() if r.path})
        for g in granularities
    }
    meta = _deterministic_meta(
        config,
        {
            "n_documents": len(dataset.doc_ids),
            "n_systems": len(systems),
            "n_system_pairs": len(systems) * (len(systems) - 1) // 2,
            "n_locations": n_locations,
            "dropped_extra_predictions": dict(sorted(dataset.dropped_extra.items())),
            "sentinel_predictions": {
                run.system_name: len(run.sentinel_ids)
                for run in dataset.runs
                if run.sentinel_ids
            },
        },
    )
    run_info = {
        "out_dir": config.out_dir,
        "wall_time_s": round(time.monotonic() - started, 3),
        "provider": provider.name,
        "provider_calls": provider.calls,
        "cache_hits": cache.hits,
        "cache_misses": cache.misses,
        "cache_entries": len(cache),
        "kernel_backend": BACKEND,
    }
    return EvalReport(
        config=config, systems=systems, granularities=granularities,
        doc_ids=dataset.doc_ids, truth=truth, records=records,
        scores=scores, tests=tests, correlations=correlations,
        agreements=agreements, meta=meta, run_info=run_info,
    )


def rescore_resolved(resolved_path: str, config: EvalConfig) -> EvalReport:
    """Recompute a full report from a resolved-records file alone.

    The resolved file is the pipeline's sufficient statistic: no geocoding
    happens here, and the emitted report matches the original byte for byte
    given the same configuration.
    """
    started = time.monotonic()
    granularities = config.ordered_granularities()
    with open(resolved_path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    truth_records: dict[str, TruthRecord] = {}
    records: dict[str, list[ResolvedRecord]] = {}
    order: list[str] = []
    for doc_id, by_system in doc.items():
        for system, rec in by_system.items():
            path = _path_from_record(rec)
            if system == GROUND_TRUTH_NAME:
                truth_records[doc_id] = TruthRecord(
                    home=GeoPoint(lat=rec["lat"], lon=rec["lon"]), path=path
                )
                continue
            if system not in records:
                records[system] = []
                order.append(system)
            point = (
                None if rec["lat"] is None else GeoPoint(lat=rec["lat"], lon=rec["lon"])
            )
            records[system].append(
                ResolvedRecord(
                    doc_id=doc_id, point=point, path=path, error_dist=rec["error_dist"]
                )
            )
    truth = GroundTruth(records=truth_records)
    doc_ids = tuple(sorted(truth_records))
    systems = tuple(order)
    scores = _score_all(records, truth, granularities, config.threshold_km)
    tests = _pairwise_tests(systems, records, scores, truth, granularities)
    correlations = _correlations(systems, scores, granularities)
    agreements = _agreements(tests, granularities, config.alpha)
    n_locations = {
        g.label: len({r.path.key(g) for r in truth.records.values() if r.path})
        for g in granularities
    }
    meta = _deterministic_meta(
        config,
        {
            "n_documents": len(doc_ids),
            "n_systems": len(systems),
            "n_system_pairs": len(systems) * (len(systems) - 1) // 2,
            "n_locations": n_locations,
            "dropped_extra_predictions": {},
            "sentinel_predictions": {},
        },
    )
    run_info = {
        "out_dir": config.out_dir,
        "wall_time_s": round(time.monotonic() - started, 3),
        "provider": "resolved-file",
        "provider_calls": 0,
        "cache_hits": 0,
        "cache_misses": 0,
        "cache_entries": 0,
        "kernel_backend": BACKEND,
    }
    return EvalReport(
        config=config, systems=systems, granularities=granularities,
        doc_ids=doc_ids, truth=truth, records=records,
        scores=scores, tests=tests, correlations=correlations,
        agreements=agreements, meta=meta, run_info=run_info,
    )


def _path_from_record(rec: dict) -> AdminPath:
    if rec.get("country") is None and all(
        rec.get(k) is None for k in ("state", "county", "city")
    ):
        return UNRESOLVED_PATH
    return AdminPath(
        country=rec.get("country"), state=rec.get("state"),
        county=rec.get("county"), city=rec.get("city"),
    )


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_resolved(report: EvalReport) -> str:
    """The nested doc -> system -> record JSON document."""
    doc: dict[str, dict] = {}
    by_system = {
        name: {r.doc_id: r for r in recs} for name, recs in report.records.items()
    }
    for doc_id in report.doc_ids:
        entry: dict[str, dict] = {}
        truth_rec = report.truth.records[doc_id]
        entry[GROUND_TRUTH_NAME] = _record_fields(
            doc_id, truth_rec.home, truth_rec.path, 0.0
        )
        for name in report.systems:
            r = by_system[name][doc_id]
            entry[name] = _record_fields(doc_id, r.point, r.path, r.error_dist)
        doc[doc_id] = entry
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def _record_fields(
    doc_id: str, point: GeoPoint | None, path: AdminPath, error_dist: float | None
) -> dict:
    return {
        "doc_id": doc_id,
        "lon": None if point is None else point.lon,
        "lat": None if point is None else point.lat,
        "country": path.country,
        "county": path.county,
        "state": path.state,
        "city": path.city,
        "error_dist": error_dist,
    }


def parse_resolved_records(source) -> dict[str, dict[str, ResolvedRecord]]:
    """Parse a resolved-records file into doc -> system -> record form."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    doc = json.loads(source)
    out: dict[str, dict[str, ResolvedRecord]] = {}
    for doc_id, by_system in doc.items():
        out[doc_id] = {}
        for system, rec in by_system.items():
            point = (
                None if rec["lat"] is None else GeoPoint(lat=rec["lat"], lon=rec["lon"])
            )
            out[doc_id][system] = ResolvedRecord(
                doc_id=rec["doc_id"], point=point,
                path=_path_from_record(rec), error_dist=rec["error_dist"],
            )
    return out


def render_scores(report: EvalReport) -> str:
    columns = ["system"]
    for g in report.granularities:
        for metric in METRIC_IDS:
            if metric in DISTANCE_METRIC_IDS:
                continue
            name = metric.replace("@x", f"@{_trim(report.config.threshold_km)}")
            columns.append(f"{g.label}_{name}")
    columns += ["median_km", "mean_km"]
    lines = ["\t".join(columns)]
    for system in report.systems:
        row = [system]
        for g in report.granularities:
            vector = report.scores[(system, g)]
            for metric in METRIC_IDS:
                if metric in DISTANCE_METRIC_IDS:
                    continue
                row.append(_fmt(metric_value(vector, metric)))
        vector = report.scores[(system, report.granularities[0])]
        row.append(_fmt(vector.median_km))
        row.append(_fmt(vector.mean_km))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def _trim(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(value)


def render_tests(report: EvalReport) -> str:
    header = [
        "granularity", "test", "metric", "system_a", "system_b",
        "statistic", "p_value", "direction", "n_effective", "method", "degenerate",
    ]
    lines = ["\t".join(header)]
    for g in report.granularities:
        for test_id, metric_id in TEST_COMBOS:
            for r in report.tests[(g, combo_label(test_id, metric_id))]:
                lines.append(
                    "\t".join(
                        [
                            g.label, r.test_id, r.metric_id, r.system_a, r.system_b,
                            _fmt(r.statistic), _fmt(r.p_value), r.direction,
                            str(r.n_effective), r.method, _fmt(r.degenerate),
                        ]
                    )
                )
    return "\n".join(lines) + "\n"


def render_correlations(report: EvalReport) -> str:
    header = [
        "scope", "metric_x", "metric_y", "tau_b", "p_value",
        "significant", "n_systems", "n_excluded",
    ]
    lines = ["\t".join(header)]
    alpha = report.config.alpha
    for scope, results in report.correlations.items():
        for r in results:
            significant = None if r.p_value is None else r.p_value <= alpha
            lines.append(
                "\t".join(
                    [
                        scope, r.metric_x, r.metric_y, _fmt(r.tau_b), _fmt(r.p_value),
                        _fmt(significant), str(r.n_systems), str(r.n_excluded),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def render_agreement(report: EvalReport) -> str:
    header = [
        "granularity", "combo_x", "combo_y", "dp_x", "dp_y", "ssa", "ssd", "n_pairs",
    ]
    lines = ["\t".join(header)]
    for g in report.granularities:
        for s in report.agreements[g]:
            lines.append(
                "\t".join(
                    [
                        g.label, s.combo_x, s.combo_y, _fmt(s.dp_x), _fmt(s.dp_y),
                        _fmt(s.ssa), _fmt(s.ssd), str(s.n_pairs),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def render_boxplot(report: EvalReport) -> str:
    """Per-system quartiles/whiskers/mean over error distances.

    Statistics are computed over all distances; the clip is display advice
    for downstream plotting, with the values beyond it counted, not dropped.
    """
    clip = report.config.clip_km
    lines = [
        "# quartile convention: linear interpolation between closest ranks (inclusive)",
        f"# display clip: {_trim(clip)} km; values beyond it are counted in overflow_above_clip",
        "\t".join(
            [
                "system", "n", "whisker_low", "q1", "median", "q3",
                "whisker_high", "mean", "overflow_above_clip",
            ]
        ),
    ]
    for system in report.systems:
        dists = [r.error_dist for r in report.records[system] if r.error_dist is not None]
        if len(dists) != len(report.records[system]) or not dists:
            lines.append(
                "\t".join([system, "0"] + ["n/a"] * 7)
            )
            continue
        if len(dists) == 1:
            q1 = q2 = q3 = dists[0]
        else:
            q1, q2, q3 = statistics.quantiles(dists, n=4, method="inclusive")
        iqr = q3 - q1
        in_low = [d for d in dists if d >= q1 - 1.5 * iqr]
        in_high = [d for d in dists if d <= q3 + 1.5 * iqr]
        whisker_low = min(in_low) if in_low else q1
        whisker_high = max(in_high) if in_high else q3
        mean = sum(dists) / len(dists)
        overflow = sum(1 for d in dists if d > clip)
        lines.append(
            "\t".join(
                [
                    system, str(len(dists)), _fmt(whisker_low), _fmt(q1), _fmt(q2),
                    _fmt(q3), _fmt(whisker_high), _fmt(mean), str(overflow),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_cdf(report: EvalReport) -> str:
    from .metrics import cdf as cdf_points

    lines = ["\t".join(["system", "x_km", "fraction"])]
    for system in report.systems:
        dists = [r.error_dist for r in report.records[system] if r.error_dist is not None]
        if len(dists) != len(report.records[system]) or not dists:
            continue
        for x, fraction in cdf_points(dists):
            lines.append("\t".join([system, _fmt(x), _fmt(fraction)]))
    return "\n".join(lines) + "\n"


def render_meta(report: EvalReport) -> str:
    return json.dumps(report.meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def render_run_info(report: EvalReport) -> str:
    return json.dumps(report.run_info, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def write_outputs(report: EvalReport, out_dir: str | None = None) -> str:
    """Write every output file atomically: stage in a temp dir, rename once."""
    out_dir = os.path.abspath(out_dir or report.config.out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    if os.path.exists(out_dir):
        if os.listdir(out_dir):
            raise OSError(f"output directory {out_dir!r} exists and is not empty")
        os.rmdir(out_dir)
    staging = tempfile.mkdtemp(prefix=".geoloceval-", dir=parent)
    try:
        renders = {
            "resolved.json": render_resolved(report),
            "scores.tsv": render_scores(report),
            "tests.tsv": render_tests(report),
            "correlations.tsv": render_correlations(report),
            "agreement.tsv": render_agreement(report),
            "boxplot.tsv": render_boxplot(report),
            "cdf.tsv": render_cdf(report),
            "meta.json": render_meta(report),
            "run_info.json": render_run_info(report),
        }
        for name, text in renders.items():
            with open(os.path.join(staging, name), "w", encoding="utf-8") as handle:
                handle.write(text)
        os.chmod(staging, 0o755)
        os.rename(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return out_dir
