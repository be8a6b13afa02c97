"""Experiment orchestration: GA runs, matched random baselines, logs and reports.

A run directory holds

* ``manifest.json``: resolved configuration (with embedded script sources),
  seeds, artifact list, simulation count and wall-clock timings;
* ``simulations.csv``: one row per simulation;
* ``generation_stats.csv``: one row per (scenario, repetition, method, generation).

Everything except the timings is a deterministic function of the manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from . import __version__
from .analysis import METRICS, ComparisonReport, GenerationStats, compare_runs, generation_stats
from .dsl import PARAM_NAMES, ScriptAst, compile_script, parse
from .fitness import DEFAULT_TABLES, FitnessTables, RiskScore, risk_level
from .ga import RANDOM_STREAM, GaConfig, evaluate, random_population, run_ga
from .scenario_model import (
    DEFAULT_RANGES,
    GENE_NAMES,
    SCENARIO_IDS,
    ConfigError,
    Genome,
    IntersectionLayout,
    ParameterRange,
    ScenarioTemplate,
    template_for,
)
from .simulator import InvalidReason, SimulationConfig, SimulationOutcome, run

logger = logging.getLogger(__name__)

ENV_PREFIX = "CCGEN_"
BASELINES = ("random_matched", "none")
METHODS = ("ga", "random")

SIM_COLUMNS = (
    "scenario", "repetition", "method", "generation", "individual",
    *GENE_NAMES,
    "valid", "invalid_reason", "collision", "md_cm", "d_ms_cm", "ttc_ms_cs",
    "risk_total", "risk_c", "risk_md", "risk_dms", "risk_ttc", "wall_ms",
)
STATS_COLUMNS = ("scenario", "repetition", "method", "generation", "rl_mean", "nc", "mdg_cm", "mdec_cm", "nis")


class HarnessError(RuntimeError):
    """Runtime failure (exit status 2)."""


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple[str, ...] = SCENARIO_IDS
    ga: GaConfig = GaConfig()
    sim: SimulationConfig = SimulationConfig()
    baseline: str = "random_matched"
    output_dir: str = "runs/latest"
    repetitions: int = 1
    jobs: int = 1
    record_wall_time: bool = False
    geometry: IntersectionLayout = IntersectionLayout()
    ranges: tuple[ParameterRange, ...] = DEFAULT_RANGES
    fitness: FitnessTables = DEFAULT_TABLES
    smoothing_window: int = 7
    smoothing_order: int = 2
    # script path -> source text, captured so a manifest is self-contained
    scripts: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")
        if int(self.repetitions) < 1:
            raise ConfigError("repetitions must be >= 1")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def simulations_expected(self) -> int:
        methods = 2 if self.baseline == "random_matched" else 1
        return len(self.scenarios) * self.ga.generations * self.ga.population_size * methods * self.repetitions

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "ga": dataclasses.asdict(self.ga),
            "sim": dataclasses.asdict(self.sim),
            "baseline": self.baseline,
            "output_dir": self.output_dir,
            "repetitions": self.repetitions,
            "jobs": self.jobs,
            "record_wall_time": self.record_wall_time,
            "geometry": {**dataclasses.asdict(self.geometry), "conflict_zone_center": list(self.geometry.conflict_zone_center)},
            "ranges": {r.name.upper(): [r.low, r.high] for r in self.ranges},
            "fitness": self.fitness.to_mapping(),
            "smoothing": {"window": self.smoothing_window, "order": self.smoothing_order},
            "scripts": dict(self.scripts),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {
            "scenarios", "ga", "sim", "baseline", "output_dir", "repetitions", "jobs",
            "record_wall_time", "geometry", "ranges", "fitness", "smoothing", "scripts",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        try:
            if "scenarios" in data:
                scen = data["scenarios"]
                kw["scenarios"] = tuple(str(s) for s in ([scen] if isinstance(scen, str) else scen))
            if "ga" in data:
                kw["ga"] = GaConfig(**data["ga"])
            if "sim" in data:
                kw["sim"] = SimulationConfig(**data["sim"])
            if "geometry" in data:
                geo = dict(data["geometry"])
                if "conflict_zone_center" in geo:
                    geo["conflict_zone_center"] = tuple(geo["conflict_zone_center"])
                kw["geometry"] = IntersectionLayout(**geo)
            if "ranges" in data:
                kw["ranges"] = merge_ranges(DEFAULT_RANGES, data["ranges"] or {})
            if "fitness" in data:
                kw["fitness"] = FitnessTables.from_mapping(data["fitness"] or {})
            if "smoothing" in data:
                kw["smoothing_window"] = int(data["smoothing"].get("window", 7))
                kw["smoothing_order"] = int(data["smoothing"].get("order", 2))
            for key in ("baseline", "output_dir"):
                if key in data:
                    kw[key] = str(data[key])
            for key in ("repetitions", "jobs"):
                if key in data:
                    kw[key] = int(data[key])
            if "record_wall_time" in data:
                kw["record_wall_time"] = bool(data["record_wall_time"])
            if "scripts" in data:
                kw["scripts"] = dict(data["scripts"] or {})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kw)


def merge_ranges(base: Iterable[ParameterRange], overrides: Mapping[str, Sequence[float]]) -> tuple[ParameterRange, ...]:
    """Override ``[low, high]`` of the named parameters (upper-case names)."""
    table = {r.name.upper(): r for r in base}
    for name, bounds in overrides.items():
        if name not in table:
            raise ConfigError(f"unknown parameter {name!r}; expected one of {', '.join(PARAM_NAMES)}")
        low, high = bounds
        table[name] = ParameterRange(name.lower(), float(low), float(high), table[name].unit)
    return tuple(table[name] for name in PARAM_NAMES)


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the YAML file (if any), then ``CCGEN_*`` environment overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        data = loaded or {}
    cfg = ExperimentConfig.from_dict(data)
    return apply_overrides(cfg, env_overrides(os.environ if env is None else env))


_ENV_KEYS = {
    "SCENARIOS": "scenarios",
    "SEED": "seed",
    "GENERATIONS": "generations",
    "POPULATION": "population",
    "REPETITIONS": "repetitions",
    "JOBS": "jobs",
    "OUT": "out",
    "BASELINE": "baseline",
}


def env_overrides(env: Mapping[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for suffix, key in _ENV_KEYS.items():
        value = env.get(ENV_PREFIX + suffix)
        if value is None or value == "":
            continue
        if key == "scenarios":
            out[key] = [s.strip() for s in value.split(",") if s.strip()]
        elif key in ("out", "baseline"):
            out[key] = value
        else:
            try:
                out[key] = int(value)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX}{suffix} must be an integer, got {value!r}") from None
    return out


def apply_overrides(cfg: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Apply flat overrides (``scenarios, seed, generations, population, repetitions, jobs, out, baseline``)."""
    ga_changes = {}
    for key, ga_key in (("seed", "seed"), ("generations", "generations"), ("population", "population_size")):
        if overrides.get(key) is not None:
            ga_changes[ga_key] = int(overrides[key])
    changes: dict[str, Any] = {}
    if ga_changes:
        changes["ga"] = dataclasses.replace(cfg.ga, **ga_changes)
    if overrides.get("scenarios"):
        changes["scenarios"] = tuple(overrides["scenarios"])
    for key, attr in (("repetitions", "repetitions"), ("jobs", "jobs"), ("out", "output_dir"), ("baseline", "baseline")):
        if overrides.get(key) is not None:
            changes[attr] = overrides[key]
    return dataclasses.replace(cfg, **changes) if changes else cfg


# ---------------------------------------------------------------------------
# Scenario resolution


@dataclass(frozen=True)
class ResolvedScenario:
    name: str
    template: ScenarioTemplate
    ranges: tuple[ParameterRange, ...]
    sim: SimulationConfig
    stream_key: int


def scenario_stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def is_script_ref(ref: str) -> bool:
    return ref not in SCENARIO_IDS


def capture_scripts(cfg: ExperimentConfig) -> ExperimentConfig:
    """Read every referenced script into ``cfg.scripts`` (already captured sources win)."""
    scripts = dict(cfg.scripts)
    for ref in cfg.scenarios:
        if is_script_ref(ref) and ref not in scripts:
            try:
                scripts[ref] = Path(ref).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read scenario script {ref}: {exc.strerror}") from None
    return dataclasses.replace(cfg, scripts=scripts)


def resolve_scenario(ref: str, cfg: ExperimentConfig) -> ResolvedScenario:
    if not is_script_ref(ref):
        return ResolvedScenario(ref, template_for(ref, cfg.geometry), cfg.ranges, cfg.sim, scenario_stream_key(ref))
    ast: ScriptAst = parse(cfg.scripts[ref], ref)
    template, _, _ = compile_script(ast, cfg.geometry)
    ranges = merge_ranges(cfg.ranges, {p.name: (p.low, p.high) for p in ast.param_decls})
    sim = cfg.sim
    if ast.sim_decls is not None:
        settings = {
            k: getattr(ast.sim_decls, k)
            for k in ("timestep", "horizon", "interaction_radius")
            if getattr(ast.sim_decls, k) is not None
        }
        sim = dataclasses.replace(sim, **settings)
    return ResolvedScenario(template.id, template, ranges, sim, scenario_stream_key(template.id))


# ---------------------------------------------------------------------------
# Running


def simulate(template: ScenarioTemplate, sim: SimulationConfig, timed: bool, genome: Genome) -> SimulationOutcome:
    start = time.perf_counter()
    outcome = run(template, genome, sim).without_trace()
    if timed:
        outcome = dataclasses.replace(outcome, wall_ms=(time.perf_counter() - start) * 1e3)
    return outcome


@dataclass
class RunManifest:
    run_id: str
    config: dict
    seed: int
    artifacts: dict[str, str]
    tool_version: str
    simulation_count: int
    stats_rows: int
    timings: list[dict] = field(default_factory=list)
    resampled_generations: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)


def run_id_for(cfg: ExperimentConfig) -> str:
    snapshot = cfg.to_dict()
    snapshot.pop("output_dir")
    snapshot.pop("jobs")
    digest = hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).hexdigest()
    return digest[:16]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def _sim_row(scenario, rep, method, g, i, genome: Genome, outcome: SimulationOutcome, score: RiskScore) -> list[str]:
    return [
        scenario, str(rep), method, str(g), str(i),
        *(_fmt(v) for v in genome.as_tuple()),
        _fmt(outcome.valid),
        outcome.invalid_reason.value if outcome.invalid_reason else "",
        _fmt(outcome.collision),
        _fmt(outcome.md_cm), _fmt(outcome.d_ms_cm), _fmt(outcome.ttc_ms_cs),
        str(score.total), str(score.c), str(score.md), str(score.d_ms), str(score.ttc_ms),
        _fmt(outcome.wall_ms),
    ]


def _stats_row(scenario, rep, method, st: GenerationStats) -> list[str]:
    return [
        scenario, str(rep), method, str(st.generation),
        _fmt(st.rl_mean), str(st.nc), _fmt(st.mdg_mean_cm), _fmt(st.mdec_mean_cm), str(st.nis),
    ]


def cmd_run(cfg: ExperimentConfig) -> RunManifest:
    """Run GA (and the matched random baseline) for every scenario and repetition."""
    cfg = capture_scripts(cfg)
    scenarios = [resolve_scenario(ref, cfg) for ref in cfg.scenarios]
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate scenario names: {names}")

    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        sim_fh = open(out / "simulations.csv", "w", newline="")
        stats_fh = open(out / "generation_stats.csv", "w", newline="")
    except OSError as exc:
        raise HarnessError(f"cannot write to output directory {out}: {exc.strerror}") from None

    manifest = RunManifest(
        run_id=run_id_for(cfg),
        config=cfg.to_dict(),
        seed=cfg.ga.seed,
        artifacts={"simulations": "simulations.csv", "generation_stats": "generation_stats.csv", "manifest": "manifest.json"},
        tool_version=__version__,
        simulation_count=0,
        stats_rows=0,
    )
    executor = ProcessPoolExecutor(max_workers=cfg.jobs) if cfg.jobs > 1 else None
    mapper = (lambda f, xs: executor.map(f, xs, chunksize=max(1, len(xs) // (4 * cfg.jobs)))) if executor else map

    with sim_fh, stats_fh:
        sim_w = csv.writer(sim_fh, lineterminator="\n")
        stats_w = csv.writer(stats_fh, lineterminator="\n")
        sim_w.writerow(SIM_COLUMNS)
        stats_w.writerow(STATS_COLUMNS)
        try:
            for sc in scenarios:
                evaluator = functools.partial(simulate, sc.template, sc.sim, cfg.record_wall_time)
                for rep in range(cfg.repetitions):
                    prefix = (sc.stream_key, rep)
                    t0 = time.perf_counter()
                    history = run_ga(sc.template, cfg.ga, evaluator, sc.ranges, cfg.fitness, mapper, prefix)
                    manifest.timings.append(
                        {"scenario": sc.name, "repetition": rep, "method": "ga", "seconds": time.perf_counter() - t0}
                    )
                    for g in history.resampled:
                        manifest.resampled_generations.append({"scenario": sc.name, "repetition": rep, "generation": g})
                    per_gen = [
                        ([ind.genome for ind in inds], outs, [ind.score for ind in inds])
                        for inds, outs in zip(history.generations, history.outcomes)
                    ]
                    _write_method(sim_w, stats_w, manifest, sc.name, rep, "ga", per_gen)

                    if cfg.baseline == "random_matched":
                        t0 = time.perf_counter()
                        per_gen = []
                        for g in range(cfg.ga.generations):
                            genomes = random_population(
                                sc.ranges, cfg.ga.population_size, cfg.ga.seed, (*prefix, RANDOM_STREAM, g)
                            )
                            inds, outs = evaluate(genomes, evaluator, g, cfg.fitness, mapper)
                            per_gen.append((genomes, outs, [ind.score for ind in inds]))
                        manifest.timings.append(
                            {"scenario": sc.name, "repetition": rep, "method": "random", "seconds": time.perf_counter() - t0}
                        )
                        _write_method(sim_w, stats_w, manifest, sc.name, rep, "random", per_gen)
                    logger.info("scenario %s repetition %d done", sc.name, rep)
        finally:
            if executor is not None:
                executor.shutdown()

    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def _write_method(sim_w, stats_w, manifest: RunManifest, scenario: str, rep: int, method: str, per_gen) -> None:
    for g, (genomes, outcomes, scores) in enumerate(per_gen):
        for i, (genome, outcome, score) in enumerate(zip(genomes, outcomes, scores)):
            sim_w.writerow(_sim_row(scenario, rep, method, g, i, genome, outcome, score))
        stats = generation_stats(list(zip(outcomes, scores)), g)
        stats_w.writerow(_stats_row(scenario, rep, method, stats))
        manifest.simulation_count += len(genomes)
        manifest.stats_rows += 1


def rerun_from_manifest(manifest_path: str | Path, output_dir: str | Path, jobs: int | None = None) -> RunManifest:
    manifest = read_manifest(manifest_path)
    cfg = dataclasses.replace(manifest.experiment_config(), output_dir=str(output_dir))
    if jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=jobs)
    return cmd_run(cfg)


# ---------------------------------------------------------------------------
# Reporting


class ReportError(ValueError):
    pass


def read_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        return RunManifest.from_json(path.read_text(encoding="utf-8"))
    except OSError:
        raise ReportError(f"missing manifest: {path}") from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise ReportError(f"corrupt manifest: {path} ({exc})") from None


def _opt_float(text: str) -> float | None:
    return None if text == "" else float(text)


def load_simulations(run_dir: str | Path) -> dict[tuple[str, int, str, int], list[tuple[SimulationOutcome, RiskScore]]]:
    """Per-simulation records grouped by (scenario, repetition, method, generation), in file order."""
    path = Path(run_dir) / "simulations.csv"
    groups: dict[tuple[str, int, str, int], list] = {}
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                outcome = SimulationOutcome(
                    valid=row["valid"] == "1",
                    invalid_reason=InvalidReason(row["invalid_reason"]) if row["invalid_reason"] else None,
                    collision=row["collision"] == "1",
                    md_cm=_opt_float(row["md_cm"]),
                    d_ms_cm=_opt_float(row["d_ms_cm"]),
                    ttc_ms_cs=_opt_float(row["ttc_ms_cs"]),
                )
                score = RiskScore(
                    int(row["risk_total"]), int(row["risk_c"]), int(row["risk_md"]), int(row["risk_dms"]), int(row["risk_ttc"])
                )
                key = (row["scenario"], int(row["repetition"]), row["method"], int(row["generation"]))
                groups.setdefault(key, []).append((outcome, score))
    except OSError:
        raise ReportError(f"missing simulations log: {path}") from None
    except (KeyError, ValueError) as exc:
        raise ReportError(f"corrupt simulations log: {path} ({exc})") from None
    return groups


def collect_stats(run_dirs: Sequence[str | Path]) -> tuple[dict, dict, list[RunManifest]]:
    """GA and random GenerationStats per scenario; repetitions of all run dirs are pooled."""
    ga: dict[str, list[list[GenerationStats]]] = {}
    rnd: dict[str, list[list[GenerationStats]]] = {}
    manifests = []
    for d in run_dirs:
        manifests.append(read_manifest(d))
        groups = load_simulations(d)
        runs: dict[tuple[str, int, str], dict[int, GenerationStats]] = {}
        for (sid, rep, method, g), records in groups.items():
            runs.setdefault((sid, rep, method), {})[g] = generation_stats(records, g)
        for (sid, rep, method), by_gen in sorted(runs.items()):
            series = [by_gen[g] for g in sorted(by_gen)]
            target = ga if method == "ga" else rnd
            target.setdefault(sid, []).append(series)
    return ga, rnd, manifests


def cmd_report(run_dirs: Sequence[str | Path], out_dir: str | Path | None = None) -> dict[str, Path]:
    """Write ``comparison.json``, ``summary.csv``, ``trends_raw.csv``, ``trends_smoothed.csv``
    and ``boxplot_data.csv`` into ``out_dir`` (default: the first run dir)."""
    if not run_dirs:
        raise ReportError("no run directories given")
    ga, rnd, manifests = collect_stats(run_dirs)
    missing = sorted(set(ga) ^ set(rnd))
    if missing or not ga:
        raise ReportError(f"runs lack a random baseline for: {', '.join(missing) or 'any scenario'}")
    cfg0 = manifests[0].config
    window = int(cfg0.get("smoothing", {}).get("window", 7))
    order = int(cfg0.get("smoothing", {}).get("order", 2))
    try:
        report = compare_runs(
            ga, rnd, window, order, metadata={"runs": [m.run_id for m in manifests], "tool_version": __version__}
        )
    except ValueError as exc:
        raise ReportError(str(exc)) from None

    out = Path(out_dir) if out_dir is not None else Path(run_dirs[0])
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "comparison": out / "comparison.json",
        "summary": out / "summary.csv",
        "trends_raw": out / "trends_raw.csv",
        "trends_smoothed": out / "trends_smoothed.csv",
        "boxplot": out / "boxplot_data.csv",
    }
    paths["comparison"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_summary(paths["summary"], report)
    _write_trends(paths["trends_raw"], report, "trend")
    _write_trends(paths["trends_smoothed"], report, "smoothed")
    _write_boxplot(paths["boxplot"], ga, rnd)
    return paths


def load_report(path: str | Path) -> ComparisonReport:
    return ComparisonReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _write_summary(path: Path, report: ComparisonReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([
            "scenario", "metric", "ga_mean", "random_mean", "relative_delta",
            "ga_final_third", "random_final_third", "final_third_relative_delta", "p_value", "stars",
        ])
        for sid, metrics in report.scenarios.items():
            for name, m in metrics.items():
                w.writerow([
                    sid, name, _fmt(m.ga.overall_mean), _fmt(m.random.overall_mean), _fmt(m.relative_delta),
                    _fmt(m.ga.final_third_mean), _fmt(m.random.final_third_mean), _fmt(m.final_third_relative_delta),
                    _fmt(m.significance.p_value), m.significance.stars.symbol,
                ])


def _write_trends(path: Path, report: ComparisonReport, attr: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "metric", "method", "generation", "value"])
        for sid, metrics in report.scenarios.items():
            for name, m in metrics.items():
                for method, summary in (("ga", m.ga), ("random", m.random)):
                    for g, v in enumerate(getattr(summary, attr)):
                        w.writerow([sid, name, method, g, _fmt(v)])


def _write_boxplot(path: Path, ga: dict, rnd: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "method", "repetition", "generation", *METRICS])
        for method, runs in (("ga", ga), ("random", rnd)):
            for sid in sorted(runs):
                for rep, series in enumerate(runs[sid]):
                    for st in series:
                        w.writerow([sid, method, rep, st.generation, *(_fmt(getattr(st, m)) for m in METRICS)])
