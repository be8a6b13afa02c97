"""
A small experiment, end to end
==============================

The harness runs the GA and a matched random baseline for each scenario,
logs every simulation, and compares the two methods. This is what
``cornercase run`` and ``cornercase report`` do from the command line.
"""

from cornercase.ga import GaConfig
from cornercase.harness import ExperimentConfig, cmd_report, cmd_run, load_report

cfg = ExperimentConfig(
    scenarios=("A", "E"),
    ga=GaConfig(population_size=20, generations=6, seed=11),
    repetitions=2,
    output_dir="runs/demo",
)
manifest = cmd_run(cfg)
print(f"run {manifest.run_id}: {manifest.simulation_count} simulations")

paths = cmd_report(["runs/demo"])
report = load_report(paths["comparison"])
for sid, metrics in report.scenarios.items():
    rl = metrics["rl_mean"]
    print(
        f"{sid:4s} final-third RL  GA {rl.ga.final_third_mean:5.2f}  random {rl.random.final_third_mean:5.2f}"
        f"  p={rl.significance.p_value:.3g} {rl.significance.stars.symbol}"
    )

# Smoothed per-generation curves are ready for plotting.
print(paths["trends_smoothed"].read_text().splitlines()[:4])
