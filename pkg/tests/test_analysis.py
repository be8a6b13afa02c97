import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import savgol_filter
from scipy.stats import mannwhitneyu

from cornercase.analysis import (
    ALL_SCENARIOS,
    METRICS,
    ComparisonReport,
    GenerationStats,
    Stars,
    compare_runs,
    generation_stats,
    mann_whitney_u,
    savitzky_golay,
    smooth_trend,
    stars_for,
    third,
    u_distribution,
)
from cornercase.fitness import INVALID, RiskScore
from cornercase.simulator import InvalidReason, SimulationOutcome

INVALID_OUT = SimulationOutcome(False, InvalidReason.NO_INTERACTION, False, None, None, None)


def valid(md, collision=False):
    return SimulationOutcome(True, None, collision, md, 4000.0, 400.0)


# -- generation_stats -----------------------------------------------------------


def test_all_invalid_generation():
    s = generation_stats([(INVALID_OUT, INVALID)] * 100)
    assert s.nis == 100 and s.nc == 0
    assert s.rl_mean is None and s.mdg_mean_cm is None and s.mdec_mean_cm is None


def test_single_valid_collision():
    batch = [(valid(100.0, True), RiskScore(22, 10, 4, 4, 4))] + [(INVALID_OUT, INVALID)] * 9
    s = generation_stats(batch)
    assert (s.rl_mean, s.nc, s.mdg_mean_cm, s.mdec_mean_cm, s.nis) == (22, 1, 100.0, None, 9)


def test_mixed_batch_against_manual_computation():
    # (valid, collision, md_cm, rl)
    rows = [
        (True, True, 120.0, 21),
        (True, False, 900.0, 6),
        (False, False, None, -1),
        (True, False, 1500.0, 1),
        (True, True, 40.0, 22),
        (False, False, None, -1),
        (True, False, 700.0, 9),
        (True, False, 2000.0, 0),
        (False, False, None, -1),
        (True, True, 300.0, 18),
    ]
    batch = [
        (valid(md, col) if ok else INVALID_OUT, RiskScore(rl) if ok else INVALID)
        for ok, col, md, rl in rows
    ]
    s = generation_stats(batch, generation=4)
    # hand totals: 7 valid rows; RL sum 77; MD sum 5560; non-collision MD sum 5100 over 4
    assert s.generation == 4
    assert s.rl_mean == pytest.approx(77 / 7)
    assert s.nc == 3 and s.nis == 3
    assert s.mdg_mean_cm == pytest.approx(5560 / 7)
    assert s.mdec_mean_cm == pytest.approx(5100 / 4)
    assert s.nc + s.nis <= s.population_size == 10


# -- Savitzky-Golay ---------------------------------------------------------------


def lstsq_oracle(y, window, order):
    """Fit each window separately; edges read off the first/last window's fit."""
    half = window // 2
    x = np.arange(window, dtype=float)
    out = np.empty(len(y))
    for c in range(half, len(y) - half):
        coef = np.polyfit(x, y[c - half : c + half + 1], order)
        out[c] = np.polyval(coef, half)
    first = np.polyfit(x, y[:window], order)
    last = np.polyfit(x, y[-window:], order)
    out[:half] = np.polyval(first, np.arange(half))
    out[len(y) - half :] = np.polyval(last, np.arange(half + 1, window))
    return out


def test_savgol_matches_per_window_fit():
    rng = np.random.default_rng(8)
    for _ in range(20):
        y = rng.normal(size=int(rng.integers(7, 60))) * 10
        assert np.max(np.abs(savitzky_golay(y) - lstsq_oracle(y, 7, 2))) < 1e-9


def test_savgol_matches_scipy_interp_mode():
    y = np.random.default_rng(1).normal(size=30)
    assert np.allclose(savitzky_golay(y, 9, 3), savgol_filter(y, 9, 3, mode="interp"), atol=1e-12)


def test_savgol_reproduces_constants_and_ramps():
    const = np.full(30, 7.25)
    assert np.allclose(savitzky_golay(const), const, atol=1e-12)
    ramp = 0.5 * np.arange(30) - 3
    assert np.allclose(savitzky_golay(ramp, 7, 1), ramp, atol=1e-12)
    assert np.allclose(savitzky_golay(ramp, 7, 2), ramp, atol=1e-12)


@pytest.mark.parametrize("kwargs", [{"window": 6}, {"order": 7}, {"order": 0}])
def test_savgol_parameter_errors(kwargs):
    with pytest.raises(ValueError):
        savitzky_golay(np.zeros(20), **kwargs)


def test_savgol_short_series():
    with pytest.raises(ValueError):
        savitzky_golay(np.zeros(5), 7, 2)


def test_smooth_trend_handles_gaps_and_short_curves():
    assert smooth_trend([None, None]) == [None, None]
    short = smooth_trend([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(short, [1, 2, 3, 4])
    filled = smooth_trend([1.0, None, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    assert np.allclose(filled, np.arange(1, 9))


# -- Mann-Whitney ---------------------------------------------------------------------


def enumerated_p(a, b):
    """Two-sided exact p by listing every way to split the pooled ranks."""
    n1, n = len(a), len(a) + len(b)
    observed = sum(x > y for x in a for y in b)
    us = []
    for idx in itertools.combinations(range(n), n1):
        us.append(sum(i - k for k, i in enumerate(idx)))
    us = np.array(us)
    lower = np.mean(us <= observed)
    upper = np.mean(us >= observed)
    return min(1.0, 2 * min(lower, upper)), observed


def test_textbook_example():
    r = mann_whitney_u([1, 2, 3], [10, 11, 12])
    assert r.statistic == 0 and r.p_value == pytest.approx(0.1) and r.method == "exact"


def test_u_distribution_sums_to_binomial():
    for n1, n2 in [(1, 1), (3, 4), (8, 8), (5, 12)]:
        counts = u_distribution(n1, n2)
        assert sum(counts) == math.comb(n1 + n2, n1)
        assert counts == counts[::-1]


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_exact_mode_matches_enumeration(n1, n2, seed):
    pool = np.random.default_rng(seed).permutation(n1 + n2) * 1.5
    a, b = pool[:n1], pool[n1:]
    p, u = enumerated_p(a, b)
    r = mann_whitney_u(a, b)
    assert r.statistic == u
    assert r.p_value == pytest.approx(p, abs=1e-12)


@given(
    st.lists(st.integers(0, 20), min_size=1, max_size=25),
    st.lists(st.integers(0, 20), min_size=1, max_size=25),
)
@settings(deadline=None)
def test_symmetry_and_scipy_agreement(a, b):
    ab, ba = mann_whitney_u(a, b), mann_whitney_u(b, a)
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-12)
    assert ab.statistic + ba.statistic == len(a) * len(b)
    method = "exact" if ab.method == "exact" else "asymptotic"
    ref = mannwhitneyu(a, b, alternative="two-sided", method=method, use_continuity=True)
    if not (ab.method == "normal" and len(set(a) | set(b)) == 1):
        assert ab.p_value == pytest.approx(ref.pvalue, abs=1e-9)


@pytest.mark.parametrize("n", [1, 4, 9, 30])
def test_identical_samples(n):
    a = list(np.random.default_rng(n).normal(size=n))
    r = mann_whitney_u(a, a)
    assert r.statistic == n * n / 2
    assert r.p_value == pytest.approx(1.0)


def test_stars():
    assert stars_for(0.0005) is Stars.THREE
    assert stars_for(0.001) is Stars.THREE
    assert stars_for(0.005) is Stars.TWO
    assert stars_for(0.05) is Stars.ONE
    assert stars_for(0.2) is Stars.NS
    order = [Stars.THREE, Stars.TWO, Stars.ONE, Stars.NS]
    ps = np.linspace(0, 1, 2001)
    ranks = [order.index(stars_for(p)) for p in ps]
    assert ranks == sorted(ranks)


# -- compare_runs --------------------------------------------------------------------


def stats_runs(rng, n_reps=3, n_gen=12, shift=0.0, pop=30):
    reps = []
    for _ in range(n_reps):
        rep = []
        for g in range(n_gen):
            rl = rng.normal(8, 1.0)
            rep.append(
                GenerationStats(g, rl + shift, (0,) * pop, int(rng.integers(0, 5)), 900.0, 1100.0, int(rng.integers(0, 5)))
            )
        reps.append(rep)
    return reps


def test_identity_comparison():
    runs = {"A": stats_runs(np.random.default_rng(0)), "B": stats_runs(np.random.default_rng(1))}
    report = compare_runs(runs, runs)
    assert set(report.scenarios) == {"A", "B", ALL_SCENARIOS}
    for metrics in report.scenarios.values():
        assert set(metrics) == set(METRICS)
        for m in metrics.values():
            assert m.delta == 0 and m.final_third_delta == 0
            assert m.significance.stars is Stars.NS


def test_uniform_rl_shift():
    rnd = stats_runs(np.random.default_rng(5), n_reps=5, n_gen=30)
    ga = [[GenerationStats(s.generation, s.rl_mean + 2, s.rl_values, s.nc, s.mdg_mean_cm, s.mdec_mean_cm, s.nis) for s in rep] for rep in rnd]
    cmp = compare_runs({"A": ga}, {"A": rnd}).scenarios["A"]["rl_mean"]
    mean_rnd = np.mean([s.rl_mean for rep in rnd for s in rep])
    assert cmp.relative_delta == pytest.approx(2 / mean_rnd)
    assert cmp.significance.stars is Stars.THREE
    assert cmp.ga.final_third_mean - cmp.random.final_third_mean == pytest.approx(2)


def test_report_json_round_trip():
    runs = {"A": stats_runs(np.random.default_rng(2)), "C": stats_runs(np.random.default_rng(3), shift=1)}
    base = {"A": stats_runs(np.random.default_rng(4)), "C": stats_runs(np.random.default_rng(6))}
    report = compare_runs(runs, base, metadata={"note": "x"})
    text = json.dumps(report.to_dict(), sort_keys=True)
    again = ComparisonReport.from_dict(json.loads(text))
    assert json.dumps(again.to_dict(), sort_keys=True) == text
    assert again.metadata["note"] == "x" and again.metadata["third"] == third(12)


def test_shape_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        compare_runs({"A": stats_runs(rng, n_gen=12)}, {"A": stats_runs(rng, n_gen=10)})
    with pytest.raises(ValueError):
        compare_runs({"A": stats_runs(rng, pop=30)}, {"A": stats_runs(rng, pop=20)})
    with pytest.raises(ValueError):
        compare_runs({"A": stats_runs(rng)}, {"B": stats_runs(rng)})


def test_third():
    assert third(30) == 10 and third(12) == 4 and third(2) == 1
