"""Genetic search over scenario genomes.

Each new individual is produced by one of three operators picked by a uniform
draw: elitism (copy the best not-yet-copied parent), single-point crossover of
two tournament winners, or single-gene random mutation of a tournament winner.
Invalid individuals (score -1) never take part in breeding.

Randomness is split into named streams derived from the run seed, so results
do not depend on how many workers evaluate the simulations:

* ``(*prefix, 0, g, 0)`` drives operator dispatch for generation ``g``;
* ``(*prefix, 0, g, 1 + k)`` is private to the ``k``-th operation (or the
  ``k``-th random genome when a generation is sampled from scratch).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .fitness import DEFAULT_TABLES, FitnessTables, RiskScore, risk_level
from .scenario_model import (
    DEFAULT_RANGES,
    GENE_NAMES,
    ConfigError,
    Genome,
    ParameterRange,
    clamp_genome,
    ordered_ranges,
    sample_random_genome,
)
from .simulator import SimulationOutcome

logger = logging.getLogger(__name__)

GA_STREAM = 0
RANDOM_STREAM = 1


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for ``seed`` and a spawn key path."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class GaConfig:
    mu_s: float = 0.1
    mu_c: float = 0.8
    mu_m: float = 0.1
    population_size: int = 100
    generations: int = 30
    seed: int = 0
    tournament_size: int = 2

    def __post_init__(self):
        for name in ("mu_s", "mu_c", "mu_m"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")
        if abs(self.mu_s + self.mu_c + self.mu_m - 1.0) > 1e-12:
            raise ConfigError("operator probabilities must sum to 1")
        for name in ("population_size", "generations", "tournament_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


class Operator(str, Enum):
    ELITISM = "elitism"
    CROSSOVER = "crossover"
    MUTATION = "mutation"


class ElitePoolExhausted(LookupError):
    pass


class NoValidParents(RuntimeError):
    pass


@dataclass(frozen=True)
class EvaluatedIndividual:
    genome: Genome
    score: RiskScore
    outcome_ref: str


@dataclass
class GaHistory:
    generations: list[list[EvaluatedIndividual]] = field(default_factory=list)
    outcomes: list[list[SimulationOutcome]] = field(default_factory=list)
    checkpoints: list[dict] = field(default_factory=list)
    resampled: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.generations)


def select_operator(u: float, cfg: GaConfig) -> Operator:
    # u == mu_s resolves to elitism.
    if u <= cfg.mu_s:
        return Operator.ELITISM
    if u < cfg.mu_s + cfg.mu_c:
        return Operator.CROSSOVER
    return Operator.MUTATION


def elitism_pick(prev: Sequence[EvaluatedIndividual], already_chosen: set[int]) -> EvaluatedIndividual:
    """Best valid individual not yet chosen (lowest index on ties); records the pick."""
    best = None
    for i, ind in enumerate(prev):
        if i in already_chosen or not ind.score.valid:
            continue
        if best is None or ind.score.total > prev[best].score.total:
            best = i
    if best is None:
        raise ElitePoolExhausted("no valid individual left for elitism")
    already_chosen.add(best)
    return prev[best]


def tournament(
    prev: Sequence[EvaluatedIndividual], pool: Sequence[int], rng: np.random.Generator, size: int
) -> EvaluatedIndividual:
    """Draw ``size`` entrants from ``pool`` with replacement; highest score wins, lowest index on ties."""
    entrants = rng.choice(len(pool), size=size, replace=True)
    winner = min((pool[j] for j in entrants), key=lambda i: (-prev[i].score.total, i))
    return prev[winner]


def crossover(
    p1: Genome, p2: Genome, cut: int, ranges: Iterable[ParameterRange] = DEFAULT_RANGES
) -> tuple[Genome, Genome]:
    if not 1 <= cut < len(GENE_NAMES):
        raise ValueError(f"cut must be in 1..{len(GENE_NAMES) - 1}, got {cut}")
    a, b = p1.as_tuple(), p2.as_tuple()
    c1 = Genome.from_sequence(a[:cut] + b[cut:])
    c2 = Genome.from_sequence(b[:cut] + a[cut:])
    return clamp_genome(c1, ranges), clamp_genome(c2, ranges)


def mutate(g: Genome, ranges: Iterable[ParameterRange], rng: np.random.Generator) -> Genome:
    """Redraw one uniformly chosen gene from its range."""
    ordered = ordered_ranges(ranges)
    i = int(rng.integers(len(GENE_NAMES)))
    r = ordered[i]
    values = list(g.as_tuple())
    values[i] = r.low + (r.high - r.low) * rng.random()
    return Genome.from_sequence(values)


def next_generation(
    prev: Sequence[EvaluatedIndividual],
    cfg: GaConfig,
    rng: np.random.Generator,
    ranges: Iterable[ParameterRange] = DEFAULT_RANGES,
    op_rng: Callable[[int], np.random.Generator] | None = None,
) -> list[Genome]:
    """Build ``cfg.population_size`` genomes from an evaluated population.

    ``rng`` drives operator dispatch; ``op_rng(k)`` supplies the generator for
    the k-th operation (defaults to ``rng`` itself).
    """
    ranges = ordered_ranges(ranges)
    pool = [i for i, ind in enumerate(prev) if ind.score.valid]
    if not pool:
        raise NoValidParents("every individual of the previous generation is invalid")
    if op_rng is None:
        op_rng = lambda k: rng  # noqa: E731

    target = cfg.population_size
    out: list[Genome] = []
    chosen: set[int] = set()
    k = 0
    while len(out) < target:
        op = select_operator(rng.random(), cfg)
        if op is Operator.ELITISM:
            try:
                out.append(elitism_pick(prev, chosen).genome)
            except ElitePoolExhausted:
                if cfg.mu_c + cfg.mu_m == 0.0:
                    # Pure elitism with too few valid parents: top up with fresh samples.
                    fill = op_rng(k)
                    k += 1
                    out.append(sample_random_genome(ranges, fill))
            continue
        local = op_rng(k)
        k += 1
        if op is Operator.CROSSOVER:
            p1 = tournament(prev, pool, local, cfg.tournament_size)
            p2 = tournament(prev, pool, local, cfg.tournament_size)
            cut = int(local.integers(1, len(GENE_NAMES)))
            c1, c2 = crossover(p1.genome, p2.genome, cut, ranges)
            out.append(c1)
            if len(out) < target:
                out.append(c2)
        else:
            subject = tournament(prev, pool, local, cfg.tournament_size)
            out.append(mutate(subject.genome, ranges, local))
    return out


Evaluator = Callable[[Genome], SimulationOutcome]
Mapper = Callable[[Evaluator, Sequence[Genome]], Iterator[SimulationOutcome]]


def random_population(
    ranges: Iterable[ParameterRange], n: int, seed: int, key: tuple[int, ...]
) -> list[Genome]:
    """``n`` genomes, the i-th drawn from stream ``(*key, 1 + i)``."""
    return [sample_random_genome(ranges, stream(seed, *key, 1 + i)) for i in range(n)]


def evaluate(
    genomes: Sequence[Genome],
    evaluator: Evaluator,
    generation: int,
    tables: FitnessTables = DEFAULT_TABLES,
    mapper: Mapper = map,
) -> tuple[list[EvaluatedIndividual], list[SimulationOutcome]]:
    outcomes = [o.without_trace() for o in mapper(evaluator, genomes)]
    individuals = [
        EvaluatedIndividual(g, risk_level(o, tables), f"{generation}:{i}")
        for i, (g, o) in enumerate(zip(genomes, outcomes))
    ]
    return individuals, outcomes


def run_ga(
    template,
    cfg: GaConfig,
    evaluator: Evaluator,
    ranges: Iterable[ParameterRange] = DEFAULT_RANGES,
    tables: FitnessTables = DEFAULT_TABLES,
    mapper: Mapper = map,
    prefix: tuple[int, ...] = (),
) -> GaHistory:
    """Evolve ``cfg.generations`` populations for one scenario.

    ``template`` is informational (the evaluator is already bound to it);
    ``mapper`` must preserve input order.
    """
    ranges = ordered_ranges(ranges)
    history = GaHistory()
    genomes = random_population(ranges, cfg.population_size, cfg.seed, (*prefix, GA_STREAM, 0))
    for g in range(cfg.generations):
        if g > 0:
            dispatch = stream(cfg.seed, *prefix, GA_STREAM, g, 0)
            try:
                genomes = next_generation(
                    history.generations[-1],
                    cfg,
                    dispatch,
                    ranges,
                    op_rng=lambda k, g=g: stream(cfg.seed, *prefix, GA_STREAM, g, 1 + k),
                )
            except NoValidParents:
                logger.warning("scenario %s generation %d: no valid parents, resampling", getattr(template, "id", "?"), g)
                history.resampled.append(g)
                genomes = random_population(ranges, cfg.population_size, cfg.seed, (*prefix, GA_STREAM, g))
            history.checkpoints.append(dispatch.bit_generator.state)
        else:
            history.checkpoints.append({})
        individuals, outcomes = evaluate(genomes, evaluator, g, tables, mapper)
        history.generations.append(individuals)
        history.outcomes.append(outcomes)
    return history
