"""Acceptance suite: one test per exit criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
PASS/FAIL lines alongside the pytest output.
"""
import itertools
import json
import math
import os
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from geoloceval.geo import AdminPath, GeoPoint, Granularity
from geoloceval.geocode import GazetteerProvider, Gazetteer, GeocodeCache, ResolvedRecord
from geoloceval.ingest import GroundTruth, TruthRecord
from geoloceval.metrics import accuracy, majority_class_run, micro_prf, stratified_sampling_run, tally
from geoloceval.report import (
    EvalConfig,
    OUTPUT_FILES,
    run_evaluation,
    write_outputs,
)
from geoloceval.stats import (
    kendall_tau_b,
    macro_sign_test,
    macro_t_test,
    micro_sign_test,
    proportions_z_test,
    ssa_ssd,
    wilcoxon_test,
)

import scipy.stats as scipy_stats

from conftest import SyntheticWorld

DATA = Path(__file__).parent / "data"


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number}: FAIL - {description}")
        raise
    print(f"ACCEPTANCE {number}: PASS - {description}")


def city_path(name, country="X"):
    return AdminPath(country=country, state="S", county="C", city=name)


def truth_of(labels):
    return GroundTruth(
        records={
            f"d{i:06d}": TruthRecord(home=GeoPoint(0, 0), path=city_path(lbl))
            for i, lbl in enumerate(labels)
        }
    )


def records_of(labels):
    return [
        ResolvedRecord(doc_id=f"d{i:06d}", point=None, path=city_path(lbl), error_dist=None)
        for i, lbl in enumerate(labels)
    ]


def test_criterion_1_micro_identity():
    with criterion(1, "micro P/R/F1 equal accuracy exactly on 100 random runs"):
        started = time.perf_counter()
        rng = random.Random(1234)
        for _ in range(100):
            n_classes = rng.randint(3, 50)
            classes = [f"L{i}" for i in range(n_classes)]
            n_docs = rng.randint(n_classes, 400)
            weights = [rng.uniform(0.1, 10.0) for _ in classes]
            truth_labels = rng.choices(classes, weights=weights, k=n_docs)
            pred_labels = rng.choices(
                classes + ["OUTSIDE1", "OUTSIDE2"], weights=weights + [1.0, 1.0], k=n_docs
            )
            t = tally(records_of(pred_labels), truth_of(truth_labels), Granularity.CITY)
            acc = accuracy(t)
            p, r, f1 = micro_prf(t)
            assert p == acc and r == acc and f1 == acc
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0, f"micro-identity sweep took {elapsed:.2f}s"


def enum_sign_p(wins, n):
    hi = max(wins, n - wins)
    count = sum(
        1
        for bits in itertools.product((0, 1), repeat=n)
        if max(sum(bits), n - sum(bits)) >= hi
    )
    return count / 2 ** n


def enum_wilcoxon_p(diffs):
    nonzero = [d for d in diffs if d != 0]
    n = len(nonzero)
    ranks = scipy_stats.rankdata([abs(d) for d in nonzero])
    w_obs = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    total = ranks.sum()
    hi = max(w_obs, total - w_obs)
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if max(w, total - w) >= hi - 1e-12:
            count += 1
    return count / 2 ** n


def test_criterion_2_statistical_test_oracles():
    with criterion(2, "sign/Wilcoxon match exhaustive enumeration; t and z match textbook formulas"):
        started = time.perf_counter()
        rng = random.Random(99)

        # sign tests and Wilcoxon against all 2^n sign assignments, n <= 12
        for _ in range(30):
            n = rng.randint(1, 12)
            wins = rng.randint(0, n)
            a = [True] * wins + [False] * (n - wins)
            b = [False] * wins + [True] * (n - wins)
            assert micro_sign_test(a, b).p_value == pytest.approx(
                enum_sign_p(wins, n), abs=1e-12
            )
            fa = [rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]) for _ in range(n)]
            fb = [rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]) for _ in range(n)]
            s_wins = sum(1 for x, y in zip(fa, fb) if x > y)
            s_losses = sum(1 for x, y in zip(fa, fb) if y > x)
            s_result = macro_sign_test(fa, fb)
            if s_wins + s_losses == 0:
                assert s_result.p_value == 1.0
            else:
                assert s_result.p_value == pytest.approx(
                    enum_sign_p(s_wins, s_wins + s_losses), abs=1e-12
                )
            diffs = [x - y for x, y in zip(fa, fb)]
            w_result = wilcoxon_test(fa, fb)
            if all(d == 0 for d in diffs):
                assert w_result.p_value == 1.0
            else:
                assert w_result.p_value == pytest.approx(
                    enum_wilcoxon_p(diffs), abs=1e-12
                )

        # paired t and pooled z against independently coded textbook formulas
        for _ in range(50):
            n = rng.randint(2, 60)
            fa = [rng.random() for _ in range(n)]
            fb = [rng.random() for _ in range(n)]
            diffs = [x - y for x, y in zip(fa, fb)]
            mean = sum(diffs) / n
            sd = math.sqrt(sum((d - mean) ** 2 for d in diffs) / (n - 1))
            result = macro_t_test(fa, fb)
            if sd > 0:
                t_stat = mean / (sd / math.sqrt(n))
                p_ref = 2 * scipy_stats.t.sf(abs(t_stat), n - 1)
                assert result.statistic == pytest.approx(t_stat, rel=1e-9)
                assert result.p_value == pytest.approx(p_ref, rel=1e-9, abs=1e-12)

            pa, pb = rng.random(), rng.random()
            n_users = rng.randint(10, 100000)
            z_result = proportions_z_test(pa, pb, n_users)
            pooled = (pa + pb) / 2
            z_ref = (pa - pb) / math.sqrt(pooled * (1 - pooled) * 2 / n_users)
            p_ref = 2 * scipy_stats.norm.sf(abs(z_ref))
            assert z_result.statistic == pytest.approx(z_ref, rel=1e-9)
            assert z_result.p_value == pytest.approx(p_ref, rel=1e-9, abs=1e-300)

        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"oracle sweep took {elapsed:.2f}s"


def brute_tau_b(x, y):
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        sx = (x[i] > x[j]) - (x[i] < x[j])
        sy = (y[i] > y[j]) - (y[i] < y[j])
        if sx == 0 and sy == 0:
            continue
        if sx == 0:
            tx += 1
        elif sy == 0:
            ty += 1
        elif sx == sy:
            c += 1
        else:
            d += 1
    denom = math.sqrt((c + d + ty) * (c + d + tx))
    return None if denom == 0 else (c - d) / denom


def test_criterion_3_tau_b_oracle():
    with criterion(3, "tau-b matches brute-force pair counting; extremes are +/-1"):
        for n in range(2, 8):
            x = list(range(n))
            for perm in itertools.permutations(range(n)):
                y = list(perm)
                got = kendall_tau_b(x, y).tau_b
                assert got == pytest.approx(brute_tau_b(x, y), abs=1e-12)
        rng = random.Random(7)
        for _ in range(100):
            n = rng.randint(2, 12)
            x = [rng.randint(0, 4) for _ in range(n)]
            y = [rng.randint(0, 4) for _ in range(n)]
            want = brute_tau_b(x, y)
            got = kendall_tau_b(x, y).tau_b
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, abs=1e-12)
        tie_free = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6]
        assert kendall_tau_b(tie_free, tie_free).tau_b == pytest.approx(1.0, abs=1e-12)
        assert kendall_tau_b(
            tie_free, [-v for v in tie_free]
        ).tau_b == pytest.approx(-1.0, abs=1e-12)


def test_criterion_4_ssa_ssd_counting():
    with criterion(4, "SSA/SSD on an 11-system fixture matches exhaustive classification"):
        rng = random.Random(55)
        systems = [f"sys{i:02d}" for i in range(11)]
        pairs = list(itertools.combinations(systems, 2))
        assert len(pairs) == 55
        n_locations = 24
        n_docs = 300

        per_loc = {
            s: {
                m: [rng.random() for _ in range(n_locations)]
                for m in ("p_macro", "r_macro", "f1_macro")
            }
            for s in systems
        }
        correct = {s: [rng.random() < rng.uniform(0.2, 0.8) for _ in range(n_docs)] for s in systems}
        acc = {s: sum(correct[s]) / n_docs for s in systems}

        combos = {}
        for metric in ("p_macro", "r_macro", "f1_macro"):
            for test_name, fn in (("S", macro_sign_test), ("T", macro_t_test), ("T'", wilcoxon_test)):
                combos[f"{test_name}-{metric}"] = [
                    fn(per_loc[a][metric], per_loc[b][metric],
                       metric_id=metric, system_a=a, system_b=b)
                    for a, b in pairs
                ]
        combos["s-raw"] = [
            micro_sign_test(correct[a], correct[b], system_a=a, system_b=b)
            for a, b in pairs
        ]
        combos["p-acc"] = [
            proportions_z_test(acc[a], acc[b], n_docs, system_a=a, system_b=b)
            for a, b in pairs
        ]

        alpha = 0.05
        for combo_x, combo_y in itertools.combinations_with_replacement(sorted(combos), 2):
            summary = ssa_ssd(combos[combo_x], combos[combo_y], alpha,
                              combo_x=combo_x, combo_y=combo_y)
            assert summary.n_pairs == 55
            ssa = ssd = 0
            for rx, ry in zip(combos[combo_x], combos[combo_y]):
                if rx.p_value <= alpha and ry.p_value <= alpha:
                    if rx.direction == ry.direction and rx.direction != "none":
                        ssa += 1
                    elif rx.direction != "none" and ry.direction != "none":
                        ssd += 1
            assert summary.ssa == ssa / 55
            assert summary.ssd == ssd / 55
            assert summary.ssa + summary.ssd <= min(summary.dp_x, summary.dp_y) + 1e-15


def test_criterion_5_baselines():
    with criterion(5, "majority-class accuracy is the majority share; stratified matches expectation"):
        # 1000 docs over 5 cities with shares 0.6/0.2/0.1/0.05/0.05
        counts = {"A": 600, "B": 200, "C": 100, "D": 50, "E": 50}
        labels = [c for c, n in counts.items() for _ in range(n)]
        truth = truth_of(labels)
        mc = majority_class_run(truth, Granularity.CITY)
        assert accuracy(tally(mc, truth, Granularity.CITY)) == 0.600

        # stratified sampling over 100k docs: expected accuracy sum(q_c * t_c)
        big_labels = [c for c, n in counts.items() for _ in range(n * 100)]
        big_truth = truth_of(big_labels)
        shares = [n / 1000 for n in counts.values()]
        expected = sum(q * q for q in shares)  # 0.415 for these shares
        ss = stratified_sampling_run(big_truth, Granularity.CITY, seed=2024)
        got = accuracy(tally(ss, big_truth, Granularity.CITY))
        assert got == pytest.approx(expected, abs=0.01)

        # majority class stays competitive at coarse granularity: on a fixture
        # skewed toward one country it beats a uniform-random pseudo-system
        rng = random.Random(31)
        paths = {
            "a1": AdminPath(country="Alandia", state="S1", county="K1", city="a1"),
            "a2": AdminPath(country="Alandia", state="S1", county="K2", city="a2"),
            "b1": AdminPath(country="Borduria", state="S2", county="K3", city="b1"),
            "b2": AdminPath(country="Borduria", state="S2", county="K4", city="b2"),
            "c1": AdminPath(country="Cydonia", state="S3", county="K5", city="c1"),
            "c2": AdminPath(country="Cydonia", state="S3", county="K6", city="c2"),
            "d1": AdminPath(country="Dorne", state="S4", county="K7", city="d1"),
            "d2": AdminPath(country="Dorne", state="S4", county="K8", city="d2"),
        }
        weights = {"a1": 40, "a2": 30, "b1": 8, "b2": 7, "c1": 5, "c2": 4, "d1": 3, "d2": 3}
        skewed_labels = rng.choices(list(weights), weights=list(weights.values()), k=1000)
        skewed_truth = GroundTruth(
            records={
                f"d{i:06d}": TruthRecord(home=GeoPoint(0, 0), path=paths[lbl])
                for i, lbl in enumerate(skewed_labels)
            }
        )
        mc_records = majority_class_run(skewed_truth, Granularity.CITY)
        mc_country_acc = accuracy(tally(mc_records, skewed_truth, Granularity.COUNTRY))
        uniform_records = [
            ResolvedRecord(doc_id=f"d{i:06d}", point=None,
                           path=paths[rng.choice(list(paths))], error_dist=None)
            for i in range(1000)
        ]
        uniform_country_acc = accuracy(
            tally(uniform_records, skewed_truth, Granularity.COUNTRY)
        )
        assert mc_country_acc > uniform_country_acc


def test_criterion_6_granularity_monotonicity():
    with criterion(6, "accuracy never decreases from city to country on 100 gazetteer-resolved runs"):
        world = SyntheticWorld(n_cities=48, seed=11)
        gazetteer = Gazetteer.parse(__import__("io").StringIO(world.gazetteer_csv()))
        provider = GazetteerProvider(gazetteer)
        cache = GeocodeCache()
        rng = random.Random(77)
        truth_cities = [rng.randrange(world.n_cities) for _ in range(40)]
        truth = GroundTruth(
            records={
                f"d{i:04d}": TruthRecord(
                    home=world.centroids[c], path=AdminPath(**world.labels(c))
                )
                for i, c in enumerate(truth_cities)
            }
        )
        from geoloceval.ingest import PredictionRun
        from geoloceval.geocode import resolve_run

        for run_index in range(100):
            predictions = {}
            for i in range(40):
                predictions[f"d{i:04d}"] = GeoPoint(
                    rng.uniform(-85, 85), rng.uniform(-180, 180)
                )
            run = PredictionRun(system_name=f"r{run_index}", predictions=predictions)
            records = resolve_run(run, truth, provider, cache)
            accs = [
                accuracy(tally(records, truth, g)) for g in Granularity
            ]  # city, county, state, country order
            assert accs == sorted(accs)


def test_criterion_7_format_round_trip(tmp_path):
    with criterion(7, "Listing-format fixture round-trips byte-identically; output fields exact"):
        from geoloceval.ingest import parse_predictions, serialize_predictions

        fixture = (DATA / "listing1_roundtrip.json").read_bytes()
        run = parse_predictions(fixture, "fixture")
        assert serialize_predictions(run).encode("utf-8") == fixture

        world = SyntheticWorld(n_cities=8, seed=3)
        assignment = [i % 8 for i in range(12)]
        gazetteer = tmp_path / "gaz.csv"
        gazetteer.write_text(world.gazetteer_csv(), encoding="utf-8")
        truth = tmp_path / "truth.json"
        truth.write_text(world.truth_json(assignment), encoding="utf-8")
        run_path = tmp_path / "sys.json"
        run_path.write_text(world.run_json(assignment, 0.7, seed=5), encoding="utf-8")
        config = EvalConfig(
            truth_path=str(truth), run_paths=[str(run_path)],
            out_dir=str(tmp_path / "out"), gazetteer_path=str(gazetteer),
        )
        out = write_outputs(run_evaluation(config))
        resolved = json.loads(open(os.path.join(out, "resolved.json")).read())
        expected_fields = ["doc_id", "lon", "lat", "country", "county", "state", "city", "error_dist"]
        for by_system in resolved.values():
            for record in by_system.values():
                assert list(record) == expected_fields


def test_criterion_8_cache_reuse(tmp_path):
    with criterion(8, "warm-cache run makes zero provider lookups and reproduces output bytes"):
        world = SyntheticWorld(n_cities=16, seed=4)
        rng = random.Random(6)
        assignment = [rng.randrange(16) for _ in range(50)]
        gazetteer = tmp_path / "gaz.csv"
        gazetteer.write_text(world.gazetteer_csv(), encoding="utf-8")
        truth = tmp_path / "truth.json"
        truth.write_text(world.truth_json(assignment, labelled=False), encoding="utf-8")
        runs = []
        for i in range(3):
            p = tmp_path / f"s{i}.json"
            p.write_text(world.run_json(assignment, 0.5 + 0.1 * i, seed=i), encoding="utf-8")
            runs.append(str(p))
        cache_file = str(tmp_path / "geo.cache")

        def run_once(label):
            config = EvalConfig(
                truth_path=str(truth), run_paths=runs,
                out_dir=str(tmp_path / label), gazetteer_path=str(gazetteer),
                cache_path=cache_file, baselines=("mc", "ss"), seed=12,
            )
            report = run_evaluation(config)
            return report, write_outputs(report)

        first_report, first_out = run_once("cold")
        assert first_report.run_info["provider_calls"] > 0
        second_report, second_out = run_once("warm")
        assert second_report.run_info["provider_calls"] == 0
        info = json.loads(open(os.path.join(second_out, "run_info.json")).read())
        assert info["provider_calls"] == 0
        for name in OUTPUT_FILES:
            if name == "run_info.json":
                continue
            a = open(os.path.join(first_out, name), "rb").read()
            b = open(os.path.join(second_out, name), "rb").read()
            assert a == b, f"{name} differs between cold and warm runs"


@pytest.mark.slow
def test_criterion_9_performance(tmp_path):
    with criterion(9, "10 systems x 10k docs against a 10k-row gazetteer finishes in under 60s"):
        rng = random.Random(2718)
        # 10,000-row gazetteer on a 100x100 grid
        lines = ["city,county,state,country,lat,lon"]
        n_side = 100
        for i in range(n_side * n_side):
            lat = -84.0 + 168.0 * (i // n_side) / (n_side - 1)
            lon = -178.0 + 356.0 * (i % n_side) / (n_side - 1)
            lines.append(
                f"city{i:05d},county{i // 4:05d},state{i // 16:05d},country{i // 64:05d},"
                f"{lat:.4f},{lon:.4f}"
            )
        gazetteer = tmp_path / "gaz10k.csv"
        gazetteer.write_text("\n".join(lines) + "\n", encoding="utf-8")

        n_docs = 10_000
        truth_doc = {
            f"d{i:05d}": {
                "lon": rng.uniform(-178, 178), "lat": rng.uniform(-84, 84)
            }
            for i in range(n_docs)
        }
        truth = tmp_path / "truth10k.json"
        truth.write_text(json.dumps(truth_doc), encoding="utf-8")
        run_paths = []
        doc_items = list(truth_doc.items())
        for s in range(10):
            noise = 2.0 + 3.0 * s
            doc = {
                doc_id: {
                    "lon": max(-178.0, min(178.0, rec["lon"] + rng.uniform(-noise, noise))),
                    "lat": max(-84.0, min(84.0, rec["lat"] + rng.uniform(-noise, noise))),
                }
                for doc_id, rec in doc_items
            }
            path = tmp_path / f"sys{s}.json"
            path.write_text(json.dumps(doc), encoding="utf-8")
            run_paths.append(str(path))

        config = EvalConfig(
            truth_path=str(truth), run_paths=run_paths,
            out_dir=str(tmp_path / "perf-out"), gazetteer_path=str(gazetteer),
        )
        started = time.perf_counter()
        report = run_evaluation(config)
        out = write_outputs(report)
        elapsed = time.perf_counter() - started
        assert sorted(os.listdir(out)) == sorted(OUTPUT_FILES)
        assert elapsed < 60.0, f"pipeline took {elapsed:.1f}s"
        print(f"  criterion 9 wall time: {elapsed:.1f}s")
