"""Per-generation metrics, trend smoothing and GA-vs-random comparison."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .fitness import RiskScore
from .simulator import SimulationOutcome

METRICS = ("rl_mean", "nc", "mdg_mean_cm", "mdec_mean_cm", "nis")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    rl_mean: float | None
    rl_values: tuple[int, ...]
    nc: int
    mdg_mean_cm: float | None
    mdec_mean_cm: float | None
    nis: int

    @property
    def population_size(self) -> int:
        return len(self.rl_values)


def _mean_or_none(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) else None


def generation_stats(
    outcomes: Sequence[tuple[SimulationOutcome, RiskScore]], generation: int = 0
) -> GenerationStats:
    """RL/MDG/MDEC means are taken over valid runs only; invalid runs count toward NIS."""
    valid = [(o, s) for o, s in outcomes if o.valid]
    return GenerationStats(
        generation=generation,
        rl_mean=_mean_or_none([s.total for _, s in valid]),
        rl_values=tuple(s.total for _, s in outcomes),
        nc=sum(1 for o, _ in valid if o.collision),
        mdg_mean_cm=_mean_or_none([o.md_cm for o, _ in valid]),
        mdec_mean_cm=_mean_or_none([o.md_cm for o, _ in valid if not o.collision]),
        nis=len(outcomes) - len(valid),
    )


# ---------------------------------------------------------------------------
# Savitzky-Golay


def savgol_weights(window: int, order: int, positions: Sequence[int]) -> np.ndarray:
    """Rows of weights that evaluate the least-squares polynomial at ``positions``
    (offsets from the window center) when dotted with the window samples."""
    half = window // 2
    x = np.arange(-half, half + 1, dtype=float)
    vander = np.vander(x, order + 1, increasing=True)
    pinv = np.linalg.pinv(vander)
    at = np.vander(np.asarray(positions, dtype=float), order + 1, increasing=True)
    return at @ pinv


def savitzky_golay(series: Sequence[float], window: int = 7, order: int = 2) -> np.ndarray:
    """Smooth ``series`` with a degree-``order`` moving least-squares fit.

    The first and last ``window // 2`` points are read off the polynomial fitted
    to the first/last full window.
    """
    y = np.asarray(series, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if not 1 <= order < window:
        raise ValueError("order must satisfy 1 <= order < window")
    if y.ndim != 1 or len(y) < window:
        raise ValueError(f"series of length {len(y)} is shorter than the window ({window})")
    half = window // 2
    out = np.empty_like(y)
    center = savgol_weights(window, order, [0])[0]
    out[half : len(y) - half] = sliding_window_view(y, window) @ center
    if half:
        out[:half] = savgol_weights(window, order, range(-half, 0)) @ y[:window]
        out[len(y) - half :] = savgol_weights(window, order, range(1, half + 1)) @ y[-window:]
    return out


def smooth_trend(series: Sequence[float | None], window: int = 7, order: int = 2) -> list[float | None]:
    """Savitzky-Golay over a per-generation curve, shrinking the window to fit short
    curves. Missing points are filled by linear interpolation before smoothing."""
    y = np.array([np.nan if v is None else v for v in series], dtype=float)
    ok = ~np.isnan(y)
    if not ok.any():
        return [None] * len(y)
    idx = np.arange(len(y))
    y = np.interp(idx, idx[ok], y[ok])
    w = min(window, len(y) if len(y) % 2 else len(y) - 1)
    if w <= order:
        return [float(v) for v in y]
    return [float(v) for v in savitzky_golay(y, w, order)]


# ---------------------------------------------------------------------------
# Mann-Whitney U


class Stars(str, Enum):
    NS = "ns"
    ONE = "one"
    TWO = "two"
    THREE = "three"

    @property
    def symbol(self) -> str:
        return {"ns": "ns", "one": "*", "two": "**", "three": "***"}[self.value]


def stars_for(p: float) -> Stars:
    if p <= 0.001:
        return Stars.THREE
    if p <= 0.01:
        return Stars.TWO
    if p <= 0.05:
        return Stars.ONE
    return Stars.NS


@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    p_value: float
    stars: Stars
    method: str = "exact"

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "stars": self.stars.value, "method": self.method}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SignificanceResult":
        return cls(d["statistic"], d["p_value"], Stars(d["stars"]), d["method"])


EXACT_MAX_MIN_SIZE = 8


def u_distribution(n1: int, n2: int) -> list[int]:
    """Counts of each U value 0..n1*n2 over all C(n1+n2, n1) orderings (no ties).

    These are the coefficients of the Gaussian binomial [n1+n2 choose n1]_q.
    """
    m, n = max(n1, n2), min(n1, n2)
    size = m * n + 1
    c = [0] * size
    c[0] = 1
    for i in range(1, n + 1):
        # multiply by (1 - q^(m+i)), then divide by (1 - q^i)
        shift = m + i
        for k in range(size - 1, shift - 1, -1):
            c[k] -= c[k - shift]
        for k in range(i, size):
            c[k] += c[k - i]
    return c


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """Two-sided Mann-Whitney U test; ``statistic`` is U for sample ``a``.

    Exact null distribution when the smaller sample has at most 8 values and
    there are no ties; otherwise the tie-corrected normal approximation with
    continuity correction.
    """
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    ranks = rankdata(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if min(n1, n2) <= EXACT_MAX_MIN_SIZE and not has_ties:
        counts = u_distribution(n1, n2)
        total = sum(counts)
        u = int(round(u1))
        lower = sum(counts[: u + 1]) / total
        upper = sum(counts[u:]) / total
        p = min(1.0, 2 * min(lower, upper))
        return SignificanceResult(u1, p, stars_for(p), "exact")

    n = n1 + n2
    mu = n1 * n2 / 2
    tie_term = float((tie_counts**3 - tie_counts).sum()) / (n * (n - 1))
    var = n1 * n2 / 12 * ((n + 1) - tie_term)
    if var <= 0:
        p = 1.0
    else:
        z = (abs(u1 - mu) - 0.5) / math.sqrt(var)
        p = min(1.0, max(0.0, math.erfc(z / math.sqrt(2))))
    return SignificanceResult(u1, p, stars_for(p), "normal")


# ---------------------------------------------------------------------------
# Comparison report


@dataclass
class MethodSummary:
    overall_mean: float | None
    first_third_mean: float | None
    final_third_mean: float | None
    trend: list[float | None]
    smoothed: list[float | None]


@dataclass
class MetricComparison:
    ga: MethodSummary
    random: MethodSummary
    delta: float | None
    relative_delta: float | None
    final_third_delta: float | None
    final_third_relative_delta: float | None
    significance: SignificanceResult
    final_third_significance: SignificanceResult


@dataclass
class ComparisonReport:
    metadata: dict
    scenarios: dict[str, dict[str, MetricComparison]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(obj):
            if isinstance(obj, SignificanceResult):
                return obj.to_dict()
            if dataclasses.is_dataclass(obj):
                return {f.name: enc(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, dict):
                return {k: enc(v) for k, v in obj.items()}
            if isinstance(obj, list):
                return [enc(v) for v in obj]
            if isinstance(obj, float) and not math.isfinite(obj):
                return None
            return obj

        return enc(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComparisonReport":
        scenarios = {}
        for sid, metrics in d["scenarios"].items():
            scenarios[sid] = {
                name: MetricComparison(
                    ga=MethodSummary(**m["ga"]),
                    random=MethodSummary(**m["random"]),
                    delta=m["delta"],
                    relative_delta=m["relative_delta"],
                    final_third_delta=m["final_third_delta"],
                    final_third_relative_delta=m["final_third_relative_delta"],
                    significance=SignificanceResult.from_dict(m["significance"]),
                    final_third_significance=SignificanceResult.from_dict(m["final_third_significance"]),
                )
                for name, m in metrics.items()
            }
        return cls(dict(d["metadata"]), scenarios)


# scenario -> repetitions -> generations
StatsRuns = Mapping[str, Sequence[Sequence[GenerationStats]]]


def third(n_generations: int) -> int:
    return max(1, n_generations // 3)


def _matrix(runs: Sequence[Sequence[GenerationStats]], metric: str) -> np.ndarray:
    return np.array(
        [[np.nan if getattr(s, metric) is None else float(getattr(s, metric)) for s in rep] for rep in runs],
        dtype=float,
    )


def _nanmean(x: np.ndarray) -> float | None:
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else None


def _summary(mat: np.ndarray, window: int, order: int) -> MethodSummary:
    k = third(mat.shape[1])
    trend = [_nanmean(mat[:, g]) for g in range(mat.shape[1])]
    return MethodSummary(
        overall_mean=_nanmean(mat),
        first_third_mean=_nanmean(mat[:, :k]),
        final_third_mean=_nanmean(mat[:, -k:]),
        trend=trend,
        smoothed=smooth_trend(trend, window, order),
    )


def _delta(ga: float | None, rnd: float | None) -> tuple[float | None, float | None]:
    if ga is None or rnd is None:
        return None, None
    d = ga - rnd
    return d, (d / rnd if rnd != 0 else None)


def _test(x: np.ndarray, y: np.ndarray) -> SignificanceResult:
    x, y = x[~np.isnan(x)], y[~np.isnan(y)]
    if not x.size or not y.size:
        return SignificanceResult(math.nan, 1.0, Stars.NS, "none")
    return mann_whitney_u(x, y)


def compare_metric(
    ga: Sequence[Sequence[GenerationStats]],
    rnd: Sequence[Sequence[GenerationStats]],
    metric: str,
    window: int = 7,
    order: int = 2,
) -> MetricComparison:
    gm, rm = _matrix(ga, metric), _matrix(rnd, metric)
    if gm.shape[1] != rm.shape[1]:
        raise ValueError("GA and random runs have different generation counts")
    k = third(gm.shape[1])
    gs, rs = _summary(gm, window, order), _summary(rm, window, order)
    delta, rel = _delta(gs.overall_mean, rs.overall_mean)
    fdelta, frel = _delta(gs.final_third_mean, rs.final_third_mean)
    return MetricComparison(
        ga=gs,
        random=rs,
        delta=delta,
        relative_delta=rel,
        final_third_delta=fdelta,
        final_third_relative_delta=frel,
        significance=_test(gm.ravel(), rm.ravel()),
        final_third_significance=_test(gm[:, -k:].ravel(), rm[:, -k:].ravel()),
    )


def _check_shapes(ga: StatsRuns, rnd: StatsRuns) -> None:
    if set(ga) != set(rnd):
        raise ValueError("GA and random runs cover different scenarios")
    for sid in ga:
        g_shape = [(len(rep), tuple(s.population_size for s in rep)) for rep in ga[sid]]
        r_shape = [(len(rep), tuple(s.population_size for s in rep)) for rep in rnd[sid]]
        if not g_shape or not r_shape:
            raise ValueError(f"scenario {sid}: no runs")
        if {shape for shape in g_shape} | {shape for shape in r_shape} != {g_shape[0]}:
            raise ValueError(f"scenario {sid}: generation counts or population sizes differ")


ALL_SCENARIOS = "ALL"


def compare_runs(
    ga: StatsRuns,
    rnd: StatsRuns,
    window: int = 7,
    order: int = 2,
    metadata: Mapping | None = None,
) -> ComparisonReport:
    """Per-scenario and pooled (``"ALL"``) GA-vs-random comparison of every metric.

    Significance is tested on the pooled per-generation values (all generations of
    all repetitions) with a two-sided Mann-Whitney U test.
    """
    _check_shapes(ga, rnd)
    meta = {
        "significance_test": "two-sided Mann-Whitney U",
        "significance_sample": "pooled per-generation values",
        "smoothing": {"method": "savitzky-golay", "window": window, "order": order},
        "third": None,
    }
    meta.update(metadata or {})
    report = ComparisonReport(meta)
    pooled_ga = [rep for sid in sorted(ga) for rep in ga[sid]]
    pooled_rnd = [rep for sid in sorted(rnd) for rep in rnd[sid]]
    groups = [(sid, ga[sid], rnd[sid]) for sid in sorted(ga)]
    if len(ga) > 1:
        groups.append((ALL_SCENARIOS, pooled_ga, pooled_rnd))
    for sid, g_runs, r_runs in groups:
        report.scenarios[sid] = {m: compare_metric(g_runs, r_runs, m, window, order) for m in METRICS}
    if pooled_ga:
        report.metadata["third"] = third(len(pooled_ga[0]))
    return report
