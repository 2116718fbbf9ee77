"""Pairwise significance tests, rank correlation, and agreement analysis.

Five two-sided tests compare system pairs: the micro sign test (s) and
proportions z-test (p) over per-document outcomes, and the macro sign test
(S), paired t-test (T), and Wilcoxon signed-rank test (T') over per-location
score vectors. Kendall's tau-b quantifies agreement between two metrics'
system rankings; SSA/SSD summarize how often two metrics reach significant
verdicts that agree or contradict.

Sign tests and Wilcoxon use exact null distributions up to a crossover size
(200 discordant pairs; 25 effective Wilcoxon pairs) and a continuity- and
tie-corrected normal approximation above it. Tau-b p-values are exact by
permutation enumeration for up to 8 systems.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .errors import ValidationError
from .geo import Granularity

DEFAULT_ALPHA = 0.05
SIGN_TEST_EXACT_LIMIT = 200
WILCOXON_EXACT_LIMIT = 25
TAU_EXACT_LIMIT = 8

A_BETTER = "a_better"
B_BETTER = "b_better"
NONE = "none"


@dataclass(frozen=True)
class TestResult:
    test_id: str  # one of "s", "p", "S", "T", "T'"
    metric_id: str
    granularity: Granularity | None
    system_a: str
    system_b: str
    statistic: float
    p_value: float
    direction: str
    n_effective: int
    method: str = "exact"
    degenerate: bool = False


@dataclass(frozen=True)
class RankCorrelation:
    metric_x: str
    metric_y: str
    tau_b: float | None  # None when a ranking is fully tied
    p_value: float | None
    n_systems: int
    n_excluded: int = 0


@dataclass(frozen=True)
class AgreementSummary:
    combo_x: str
    combo_y: str
    dp_x: float
    dp_y: float
    ssa: float
    ssd: float
    n_pairs: int


def _normal_two_sided(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta (Lentz's method).
    max_iter = 300
    eps = 3e-16
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_two_sided(t: float, df: int) -> float:
    return _betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def _binomial_two_sided(wins: int, n: int) -> tuple[float, str]:
    """Two-sided sign-test p-value for `wins` successes out of n fair trials."""
    hi = max(wins, n - wins)
    if n <= SIGN_TEST_EXACT_LIMIT:
        tail = sum(math.comb(n, j) for j in range(hi, n + 1))
        return min(1.0, 2.0 * tail / 2.0 ** n), "exact"
    z = (hi - n / 2.0 - 0.5) / math.sqrt(n / 4.0)
    if z < 0.0:
        z = 0.0
    return min(1.0, _normal_two_sided(z)), "normal"


def _direction(delta: float) -> str:
    if delta > 0:
        return A_BETTER
    if delta < 0:
        return B_BETTER
    return NONE


def micro_sign_test(
    a_correct: Sequence[bool],
    b_correct: Sequence[bool],
    *,
    metric_id: str = "raw",
    granularity: Granularity | None = None,
    system_a: str = "A",
    system_b: str = "B",
) -> TestResult:
    """Sign test over per-document binary decisions; ties are discarded."""
    if len(a_correct) != len(b_correct):
        raise ValidationError("decision vectors must have equal length")
    a_wins = sum(1 for a, b in zip(a_correct, b_correct) if a and not b)
    b_wins = sum(1 for a, b in zip(a_correct, b_correct) if b and not a)
    n = a_wins + b_wins
    if n == 0:
        return TestResult(
            "s", metric_id, granularity, system_a, system_b,
            statistic=0.0, p_value=1.0, direction=NONE, n_effective=0,
        )
    p, method = _binomial_two_sided(a_wins, n)
    return TestResult(
        "s", metric_id, granularity, system_a, system_b,
        statistic=float(a_wins), p_value=p,
        direction=_direction(a_wins - b_wins), n_effective=n, method=method,
    )


def proportions_z_test(
    p_a: float,
    p_b: float,
    n: int,
    *,
    metric_id: str = "acc",
    granularity: Granularity | None = None,
    system_a: str = "A",
    system_b: str = "B",
) -> TestResult:
    """Pooled two-proportion z-test for proportion-valued micro metrics."""
    if n <= 0:
        raise ValidationError("proportions z-test needs a positive sample count")
    for name, value in (("p_a", p_a), ("p_b", p_b)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    if p_a == p_b:
        return TestResult(
            "p", metric_id, granularity, system_a, system_b,
            statistic=0.0, p_value=1.0, direction=NONE, n_effective=n, method="normal",
        )
    pooled = (p_a + p_b) / 2.0
    se = math.sqrt(pooled * (1.0 - pooled) * 2.0 / n)
    if se == 0.0:
        # Unequal proportions whose pooled variance underflows to zero.
        return TestResult(
            "p", metric_id, granularity, system_a, system_b,
            statistic=math.inf if p_a > p_b else -math.inf, p_value=0.0,
            direction=_direction(p_a - p_b), n_effective=n,
            method="normal", degenerate=True,
        )
    z = (p_a - p_b) / se
    return TestResult(
        "p", metric_id, granularity, system_a, system_b,
        statistic=z, p_value=_normal_two_sided(z),
        direction=_direction(p_a - p_b), n_effective=n, method="normal",
    )


def macro_sign_test(
    f_a: Sequence[float],
    f_b: Sequence[float],
    *,
    metric_id: str = "f1_macro",
    granularity: Granularity | None = None,
    system_a: str = "A",
    system_b: str = "B",
) -> TestResult:
    """Sign test over paired per-location scores; zero differences discarded."""
    if len(f_a) != len(f_b):
        raise ValidationError("per-location vectors must have equal length")
    a_wins = sum(1 for a, b in zip(f_a, f_b) if a > b)
    b_wins = sum(1 for a, b in zip(f_a, f_b) if b > a)
    n = a_wins + b_wins
    if n == 0:
        return TestResult(
            "S", metric_id, granularity, system_a, system_b,
            statistic=0.0, p_value=1.0, direction=NONE, n_effective=0,
        )
    p, method = _binomial_two_sided(a_wins, n)
    return TestResult(
        "S", metric_id, granularity, system_a, system_b,
        statistic=float(a_wins), p_value=p,
        direction=_direction(a_wins - b_wins), n_effective=n, method=method,
    )


def macro_t_test(
    f_a: Sequence[float],
    f_b: Sequence[float],
    *,
    metric_id: str = "f1_macro",
    granularity: Granularity | None = None,
    system_a: str = "A",
    system_b: str = "B",
) -> TestResult:
    """Paired t-test over per-location score differences, df = n - 1."""
    n = len(f_a)
    if n != len(f_b):
        raise ValidationError("per-location vectors must have equal length")
    if n < 2:
        raise ValidationError("paired t-test needs at least two locations")
    diffs = [a - b for a, b in zip(f_a, f_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return TestResult(
                "T", metric_id, granularity, system_a, system_b,
                statistic=0.0, p_value=1.0, direction=NONE, n_effective=n, method="t",
            )
        # Constant nonzero difference: the statistic diverges.
        return TestResult(
            "T", metric_id, granularity, system_a, system_b,
            statistic=math.inf if mean > 0 else -math.inf, p_value=0.0,
            direction=_direction(mean), n_effective=n, method="t", degenerate=True,
        )
    t = mean / math.sqrt(var / n)
    return TestResult(
        "T", metric_id, granularity, system_a, system_b,
        statistic=t, p_value=_t_two_sided(t, n - 1),
        direction=_direction(mean), n_effective=n, method="t",
    )


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _wilcoxon_exact_p(doubled_ranks: Sequence[int], w2: int) -> float:
    # Count sign assignments by achievable doubled rank sum.
    total = sum(doubled_ranks)
    ways = [0] * (total + 1)
    ways[0] = 1
    for r in doubled_ranks:
        for s in range(total, r - 1, -1):
            ways[s] += ways[s - r]
    hi = max(w2, total - w2)
    count = sum(ways[hi:])
    return min(1.0, 2.0 * count / 2.0 ** len(doubled_ranks))


def wilcoxon_test(
    f_a: Sequence[float],
    f_b: Sequence[float],
    *,
    metric_id: str = "f1_macro",
    granularity: Granularity | None = None,
    system_a: str = "A",
    system_b: str = "B",
) -> TestResult:
    """Wilcoxon signed-rank test over paired per-location scores.

    Zero differences are dropped; tied magnitudes share their average rank.
    Exact distribution up to 25 effective pairs, tie-corrected normal
    approximation above.
    """
    if len(f_a) != len(f_b):
        raise ValidationError("per-location vectors must have equal length")
    diffs = [a - b for a, b in zip(f_a, f_b) if a != b]
    n = len(diffs)
    if n == 0:
        return TestResult(
            "T'", metric_id, granularity, system_a, system_b,
            statistic=0.0, p_value=1.0, direction=NONE, n_effective=0,
        )
    magnitudes = [abs(d) for d in diffs]
    ranks = _average_ranks(magnitudes)
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    if n <= WILCOXON_EXACT_LIMIT:
        doubled = [round(2 * r) for r in ranks]
        p = _wilcoxon_exact_p(doubled, round(2 * w_plus))
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        tie_sizes = Counter(magnitudes).values()
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - sum(
            t ** 3 - t for t in tie_sizes
        ) / 48.0
        z = (abs(w_plus - mean) - 0.5) / math.sqrt(variance)
        if z < 0.0:
            z = 0.0
        p = _normal_two_sided(z)
        method = "normal"
    return TestResult(
        "T'", metric_id, granularity, system_a, system_b,
        statistic=w_plus, p_value=p,
        direction=_direction(w_plus - w_minus), n_effective=n, method=method,
    )


def _pair_counts(x: Sequence[float], y: Sequence[float]) -> tuple[int, int, int, int]:
    """Concordant, discordant, tied-in-x-only, tied-in-y-only pair counts."""
    c = d = tx = ty = 0
    n = len(x)
    for i in range(n - 1):
        for j in range(i + 1, n):
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
    return c, d, tx, ty


def _tie_group_sizes(values: Sequence[float]) -> tuple[int, ...]:
    return tuple(sorted(Counter(values).values()))


@lru_cache(maxsize=256)
def _exact_s_distribution(
    x_sizes: tuple[int, ...], y_sizes: tuple[int, ...]
) -> tuple[tuple[tuple[int, int], ...], int]:
    """Null distribution of S = C - D under uniform permutation of y.

    Depends only on the two tie-group size profiles, so it is cached and
    shared across metric pairs with the same tie structure.
    """
    x = [g for g, size in enumerate(x_sizes) for _ in range(size)]
    y0 = [g for g, size in enumerate(y_sizes) for _ in range(size)]
    n = len(x)
    pairs = [
        (i, j, (x[i] > x[j]) - (x[i] < x[j]))
        for i in range(n - 1)
        for j in range(i + 1, n)
    ]
    pairs = [(i, j, sx) for i, j, sx in pairs if sx != 0]
    dist: Counter = Counter()
    total = 0
    for perm in itertools.permutations(y0):
        s = 0
        for i, j, sx in pairs:
            sy = (perm[i] > perm[j]) - (perm[i] < perm[j])
            s += sx * sy
        dist[s] += 1
        total += 1
    return tuple(sorted(dist.items())), total


def kendall_tau_b(
    scores_x: Sequence[float],
    scores_y: Sequence[float],
    *,
    metric_x: str = "x",
    metric_y: str = "y",
    n_excluded: int = 0,
) -> RankCorrelation:
    """Kendall's tau-b with tie corrections in both rankings.

    Scores enter with their natural orientation: a metric where smaller is
    better correlating perfectly with one where larger is better yields -1.
    A ranking with all values tied has no defined tau-b; the result is
    flagged not-computable (tau_b None).
    """
    n = len(scores_x)
    if n != len(scores_y):
        raise ValidationError("score vectors must have equal length")
    if n < 2:
        raise ValidationError("rank correlation needs at least two systems")
    c, d, tx, ty = _pair_counts(scores_x, scores_y)
    n0 = n * (n - 1) // 2
    x_sizes = _tie_group_sizes(scores_x)
    y_sizes = _tie_group_sizes(scores_y)
    n1 = sum(t * (t - 1) // 2 for t in x_sizes)
    n2 = sum(t * (t - 1) // 2 for t in y_sizes)
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        return RankCorrelation(metric_x, metric_y, None, None, n, n_excluded)
    s = c - d
    tau = s / denom

    if n <= TAU_EXACT_LIMIT:
        dist, total = _exact_s_distribution(x_sizes, y_sizes)
        count = sum(ways for value, ways in dist if abs(value) >= abs(s))
        p = count / total
    else:
        sum_t1 = sum(t * (t - 1) for t in x_sizes)
        sum_u1 = sum(t * (t - 1) for t in y_sizes)
        v0 = n * (n - 1) * (2 * n + 5)
        vt = sum(t * (t - 1) * (2 * t + 5) for t in x_sizes)
        vu = sum(t * (t - 1) * (2 * t + 5) for t in y_sizes)
        var = (
            (v0 - vt - vu) / 18.0
            + sum_t1 * sum_u1 / (2.0 * n * (n - 1))
            + sum(t * (t - 1) * (t - 2) for t in x_sizes)
            * sum(t * (t - 1) * (t - 2) for t in y_sizes)
            / (9.0 * n * (n - 1) * (n - 2))
        )
        if var <= 0.0:
            return RankCorrelation(metric_x, metric_y, tau, None, n, n_excluded)
        p = _normal_two_sided(s / math.sqrt(var))
    return RankCorrelation(metric_x, metric_y, tau, p, n, n_excluded)


def discriminative_power(results: Sequence[TestResult], alpha: float = DEFAULT_ALPHA) -> float:
    """Fraction of system pairs a test+metric declares significant at alpha."""
    if not results:
        raise ValidationError("no pairwise results to summarize")
    return sum(1 for r in results if r.p_value <= alpha) / len(results)


def _pair_key(result: TestResult) -> tuple[str, str]:
    return (result.system_a, result.system_b)


def _canonical(result: TestResult) -> tuple[tuple[str, str], str]:
    """Unordered pair key plus the direction expressed for that ordering."""
    if result.system_a <= result.system_b:
        return (result.system_a, result.system_b), result.direction
    flipped = {A_BETTER: B_BETTER, B_BETTER: A_BETTER, NONE: NONE}[result.direction]
    return (result.system_b, result.system_a), flipped


def ssa_ssd(
    results_x: Sequence[TestResult],
    results_y: Sequence[TestResult],
    alpha: float = DEFAULT_ALPHA,
    *,
    combo_x: str = "x",
    combo_y: str = "y",
) -> AgreementSummary:
    """Fractions of system pairs where two test+metric combinations agree.

    SSA: both significant at alpha with the same winner. SSD: both
    significant with contradicting winners.
    """
    by_pair_x = {}
    for result in results_x:
        key, direction = _canonical(result)
        by_pair_x[key] = (result.p_value, direction)
    by_pair_y = {}
    for result in results_y:
        key, direction = _canonical(result)
        by_pair_y[key] = (result.p_value, direction)
    if set(by_pair_x) != set(by_pair_y):
        raise ValidationError("result sets cover different system pairs")
    if not by_pair_x:
        raise ValidationError("no pairwise results to summarize")

    n_pairs = len(by_pair_x)
    ssa = ssd = sig_x = sig_y = 0
    for key, (p_x, dir_x) in by_pair_x.items():
        p_y, dir_y = by_pair_y[key]
        x_sig = p_x <= alpha
        y_sig = p_y <= alpha
        sig_x += x_sig
        sig_y += y_sig
        if x_sig and y_sig and dir_x != NONE and dir_y != NONE:
            if dir_x == dir_y:
                ssa += 1
            else:
                ssd += 1
    return AgreementSummary(
        combo_x=combo_x, combo_y=combo_y,
        dp_x=sig_x / n_pairs, dp_y=sig_y / n_pairs,
        ssa=ssa / n_pairs, ssd=ssd / n_pairs, n_pairs=n_pairs,
    )
