"""
Scoring outcomes with the risk-level fitness
============================================

Each valid simulation earns up to 22 points: 10 for a collision and up to 4
each for a small minimum distance, a small separation at the moment of
fastest approach, and a short time to collision at that moment. Invalid
runs score -1.
"""

import math

from cornercase.fitness import risk_level, score_d_ms, score_md, score_ttc_ms
from cornercase.simulator import InvalidReason, SimulationOutcome

# The three band tables, probed at a few distances and times.
for md in (500, 820, 1200, 2000):
    print(f"MD {md:5d} cm -> {score_md(md)}")
for d in (3000, 4100, 5000):
    print(f"D_MS {d:5d} cm -> {score_d_ms(d)}")
for t in (300, 400, math.inf):
    print(f"TTC {t} cs -> {score_ttc_ms(t)}")

crash = SimulationOutcome(True, None, True, 150.0, 3500.0, 250.0)
near_miss = SimulationOutcome(True, None, False, 900.0, 4100.0, 400.0)
nothing = SimulationOutcome(False, InvalidReason.NO_INTERACTION, False, None, None, None)

for name, outcome in (("crash", crash), ("near miss", near_miss), ("no interaction", nothing)):
    score = risk_level(outcome)
    print(f"{name:15s} total {score.total:3d}  parts {score.parts}")

# A run without a collision can never score more than 12.
