"""
Genetic search against random sampling
======================================

The GA starts from random genomes and breeds each new generation with
elitism, single-point crossover and single-gene mutation. Here it runs on
scenario D next to a random baseline of the same size.
"""

import functools

import numpy as np

from cornercase.ga import GaConfig, random_population, run_ga, evaluate
from cornercase.harness import simulate
from cornercase.scenario_model import DEFAULT_RANGES, template_for
from cornercase.simulator import SimulationConfig

template = template_for("D")
evaluator = functools.partial(simulate, template, SimulationConfig(), False)
cfg = GaConfig(population_size=30, generations=10, seed=5)

history = run_ga(template, cfg, evaluator)


def mean_rl(individuals):
    valid = [i.score.total for i in individuals if i.score.valid]
    return np.mean(valid) if valid else float("nan")


print("generation  GA mean RL  random mean RL")
for g, gen in enumerate(history.generations):
    genomes = random_population(DEFAULT_RANGES, cfg.population_size, cfg.seed, (1, g))
    baseline, _ = evaluate(genomes, evaluator, g)
    print(f"{g:10d}  {mean_rl(gen):10.2f}  {mean_rl(baseline):14.2f}")

best = max((i for gen in history.generations for i in gen), key=lambda i: i.score.total)
print("riskiest genome found:", best.genome, "score", best.score.total)
