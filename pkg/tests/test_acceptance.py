"""End-to-end acceptance criteria.

Each test checks one criterion at its stated tolerance and records a PASS/FAIL
line, printed together in the terminal summary. The GA-vs-random experiment
(6 scenarios x 12 generations x 30 individuals x 2 methods x 3 repetitions)
runs once per session and is then repeated from its manifest for the
determinism check.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from cornercase.analysis import mann_whitney_u, savitzky_golay, u_distribution
from cornercase.fitness import risk_level, score_d_ms, score_md, score_ttc_ms
from cornercase.ga import GaConfig, Operator, select_operator, stream
from cornercase.harness import (
    ExperimentConfig,
    cmd_report,
    cmd_run,
    load_report,
    load_simulations,
    rerun_from_manifest,
)
from cornercase.scenario_model import SCENARIO_IDS
from cornercase.simulator import SimulationOutcome

README = Path(__file__).resolve().parents[1] / "README.md"


def record(name, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


# -- fitness ---------------------------------------------------------------------


def band(value, edges):
    """Hand-written lookup: score 4 below the first edge, 0 from the last edge up."""
    a, b, c, d = edges
    if value < a:
        return 4
    if value < b:
        return 3
    if value < c:
        return 2
    if value < d:
        return 1
    return 0


def test_fitness_oracle_scan():
    start = time.perf_counter()
    mismatches = 0
    for v in range(10_001):
        mismatches += score_md(v) != band(v, (820, 1100, 1376, 1655))
        mismatches += score_d_ms(v) != band(v, (3780, 4020, 4255, 4490))
    for v in range(1_001):
        mismatches += score_ttc_ms(v) != band(v, (359, 394, 429, 464))
    elapsed = time.perf_counter() - start
    record(
        "fitness oracle",
        mismatches == 0 and elapsed < 1.0,
        f"{mismatches} mismatches over 21003 inputs in {elapsed:.3f} s",
    )


def random_valid_outcomes(rng, n):
    """Outcomes the simulator can produce: a collision means the gap closed to
    the crash distance, which is at most 5 m."""
    crash_cm = rng.uniform(0, 500, n)
    collision = rng.random(n) < 0.5
    md = np.where(collision, rng.uniform(0, 1, n) * crash_cm, rng.uniform(0, 3000, n))
    dms = md + rng.uniform(0, 6000, n)
    ttc = np.where(rng.random(n) < 0.1, math.inf, rng.uniform(0, 800, n))
    for c, m, d, t in zip(collision, md, dms, ttc):
        yield SimulationOutcome(True, None, bool(c), float(m), float(d), float(t))


def implication_breaks(outcomes):
    bad = n = 0
    for outcome in outcomes:
        score = risk_level(outcome)
        bad += (score.total >= 13) != (score.c == 10)
        n += 1
    return bad, n


def test_collision_implication(experiment):
    bad, n = implication_breaks(random_valid_outcomes(np.random.default_rng(2024), 100_000))
    root = experiment[0]
    groups = load_simulations(root / "run")
    real = [o for records in groups.values() for o, _ in records if o.valid]
    bad_real, n_real = implication_breaks(real)
    record(
        "collision implication",
        bad == 0 and bad_real == 0,
        f"{bad} counterexamples in {n} random valid outcomes, {bad_real} in {n_real} simulated ones",
    )


# -- GA dispatch -----------------------------------------------------------------


def test_operator_dispatch():
    cfg = GaConfig()
    n = 100_000
    counts = dict.fromkeys(Operator, 0)
    for u in stream(99, 1).random(n):
        counts[select_operator(float(u), cfg)] += 1
    worst = 0.0
    for op, p in ((Operator.ELITISM, cfg.mu_s), (Operator.CROSSOVER, cfg.mu_c), (Operator.MUTATION, cfg.mu_m)):
        worst = max(worst, abs(counts[op] - n * p) / math.sqrt(n * p * (1 - p)))
    detail = ", ".join(f"{op.value} {counts[op]}" for op in Operator) + f"; max |z| = {worst:.2f}"
    record("operator dispatch", worst <= 3.0, detail)


# -- GA vs random experiment --------------------------------------------------------


def experiment_config(out):
    return ExperimentConfig(
        scenarios=SCENARIO_IDS,
        ga=GaConfig(population_size=30, generations=12, seed=20240601),
        repetitions=3,
        output_dir=str(out),
    )


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    start = time.perf_counter()
    manifest = cmd_run(experiment_config(root / "run"))
    elapsed = time.perf_counter() - start
    report = load_report(cmd_report([root / "run"])["comparison"])
    return root, manifest, report, elapsed


def final_third(report, sid, metric):
    m = report.scenarios[sid][metric]
    return m.ga.final_third_mean, m.random.final_third_mean


def test_experiment_size(experiment):
    _, manifest, _, elapsed = experiment
    record(
        "experiment size",
        manifest.simulation_count == 12_960,
        f"{manifest.simulation_count} simulations in {elapsed:.0f} s",
    )


def test_ga_beats_random(experiment):
    _, _, report, _ = experiment
    wins = []
    for sid in SCENARIO_IDS:
        ga, rnd = final_third(report, sid, "rl_mean")
        wins.append(ga > rnd)
    pooled = report.scenarios["ALL"]["rl_mean"]
    gain = pooled.final_third_relative_delta
    per = ", ".join(
        f"{sid} {g:.2f}/{r:.2f}" for sid in SCENARIO_IDS for g, r in [final_third(report, sid, "rl_mean")]
    )
    record(
        "GA beats random",
        sum(wins) >= 5 and gain >= 0.08,
        f"GA higher in {sum(wins)}/6 (final-third RL ga/random: {per}); pooled gain {gain:+.1%} "
        f"(all generations {pooled.relative_delta:+.1%})",
    )


def test_near_collision_trend(experiment):
    _, _, report, _ = experiment
    lines = []
    ok = True
    for metric in ("mdg_mean_cm", "mdec_mean_cm"):
        lower = 0
        for sid in SCENARIO_IDS:
            ga, rnd = final_third(report, sid, metric)
            lower += ga is not None and rnd is not None and ga < rnd
        ok &= lower >= 4
        lines.append(f"{metric} lower for GA in {lower}/6")
    record("near-collision trend", ok, "; ".join(lines))


def test_nis_trend(experiment):
    _, _, report, _ = experiment
    held = []
    for sid in SCENARIO_IDS:
        ga = report.scenarios[sid]["nis"].ga
        held.append(ga.final_third_mean <= ga.first_third_mean)
    detail = ", ".join(
        f"{sid} {report.scenarios[sid]['nis'].ga.first_third_mean:.2f}->{report.scenarios[sid]['nis'].ga.final_third_mean:.2f}"
        for sid in SCENARIO_IDS
    )
    record("NIS trend", sum(held) >= 4, f"final third <= first third in {sum(held)}/6 ({detail})")


def test_determinism_from_manifest(experiment):
    root, _, _, _ = experiment
    rerun_from_manifest(root / "run" / "manifest.json", root / "rerun")
    same = all(
        (root / "run" / name).read_bytes() == (root / "rerun" / name).read_bytes()
        for name in ("simulations.csv", "generation_stats.csv")
    )
    record("determinism", same, "rerun from manifest " + ("byte-identical" if same else "differs"))


# -- analysis ------------------------------------------------------------------------------


def normal_equations_fit(y, window, order):
    half = window // 2
    x = np.arange(-half, half + 1, dtype=float)
    X = np.vstack([x**k for k in range(order + 1)]).T
    out = np.empty(len(y))
    for c in range(half, len(y) - half):
        beta = np.linalg.solve(X.T @ X, X.T @ y[c - half : c + half + 1])
        out[c] = beta[0]
    for seg, positions, target in ((y[:window], x[:half], slice(0, half)), (y[-window:], x[half + 1 :], slice(len(y) - half, None))):
        beta = np.linalg.solve(X.T @ X, X.T @ seg)
        out[target] = np.vstack([positions**k for k in range(order + 1)]).T @ beta
    return out


def test_savitzky_golay():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        y = rng.normal(0, 5, size=int(rng.integers(7, 80)))
        worst = max(worst, float(np.max(np.abs(savitzky_golay(y, 7, 2) - normal_equations_fit(y, 7, 2)))))
    const = np.full(30, -2.5)
    ramp = np.linspace(-4, 9, 30)
    exact = np.allclose(savitzky_golay(const), const, rtol=0, atol=1e-12) and np.allclose(
        savitzky_golay(ramp), ramp, rtol=0, atol=1e-12
    )
    record("Savitzky-Golay", worst < 1e-9 and exact, f"max deviation {worst:.2e} over 100 series; constants and ramps exact: {exact}")


def test_mann_whitney():
    checked = worst = 0
    for n1, n2 in itertools.product(range(1, 7), repeat=2):
        n = n1 + n2
        splits = list(itertools.combinations(range(n), n1))
        us = np.array([sum(i - k for k, i in enumerate(idx)) for idx in splits])
        assert list(np.bincount(us, minlength=n1 * n2 + 1)) == u_distribution(n1, n2)
        for idx in splits:
            a = [float(i) for i in idx]
            b = [float(i) for i in range(n) if i not in idx]
            u = sum(x > y for x in a for y in b)
            p = min(1.0, 2 * min(np.mean(us <= u), np.mean(us >= u)))
            worst = max(worst, abs(mann_whitney_u(a, b).p_value - p))
            checked += 1
    identical = all(
        mann_whitney_u(list(range(n1)), list(range(n1))).statistic == n1 * n1 / 2 for n1 in range(1, 10)
    )
    record(
        "Mann-Whitney",
        worst < 1e-12 and identical,
        f"{checked} rank splits for n1, n2 <= 6, max |dp| = {worst:.1e}; identical samples give U = n1*n2/2: {identical}",
    )


def test_non_reproducibility_is_documented():
    text = README.read_text(encoding="utf-8") if README.exists() else ""
    documented = all(s in text for s in ("18.1%", "75.4%", "13.5 s", "7.75", "9.54"))
    record(
        "explicit non-reproducibility",
        documented,
        "absolute figures from the original CARLA study are listed in the README as not reproduced",
    )
