"""
Simulating one intersection encounter
=====================================

A genome fixes the seven knobs of an encounter: where each vehicle starts
relative to the conflict point, how fast it drives, how hard the ego brakes
and at what distance it starts braking, and the distance that counts as a
crash.
"""

from cornercase.scenario_model import Genome, template_for
from cornercase.simulator import run, write_trace_csv

# Scenario A: the ego drives straight on while an oncoming car turns left
# across its lane.
template = template_for("A")
print(template)

genome = Genome(
    ego_init_dist=44.0,   # m before the conflict point
    ego_speed=40.0,       # km/h
    ego_brake=0.8,        # fraction of the 8 m/s^2 braking limit
    adv_init_dist=30.0,
    adv_speed=30.0,
    safety_dist=15.0,     # m; the ego brakes when closer and closing
    crash_dist=2.0,       # m
)

outcome = run(template, genome)
print("valid:", outcome.valid, "collision:", outcome.collision)
print(f"minimum distance {outcome.md_cm:.0f} cm")
print(f"separation at peak closing speed {outcome.d_ms_cm:.0f} cm")
print(f"time to collision at peak closing speed {outcome.ttc_ms_cs:.0f} cs")

# The full trajectory is available as a CSV trace.
write_trace_csv(outcome, "trace_A.csv")
print(len(outcome.trace), "trace rows written to trace_A.csv")

# With weak braking the same encounter ends in a crash.
softer = run(template, genome.replace(ego_brake=0.1))
print("with weak braking, collision:", softer.collision)
