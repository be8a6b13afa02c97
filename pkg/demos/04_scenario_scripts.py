"""
Describing scenarios in text
============================

Scenarios can be written as small ``.ccs`` scripts. A script names the
maneuvers, may narrow parameter ranges and may change simulation settings.
"""

from cornercase.dsl import ScriptError, builtin_script, check, compile_script, format_script, parse

print(builtin_script("F").read_text())

source = """
# a right turn squeezed by a fast crossing car
scenario squeeze
ego turns right
adversary perpendicular crosses
param ADV_SPEED in [50, 80] kmh
param SAFETY_DIST in [0, 8] m
sim horizon 15
"""
ast = parse(source)
template, ranges, sim = compile_script(ast)
print(template)
for r in ranges:
    print(f"  {r.name:14s} [{r.low:g}, {r.high:g}] {r.unit.value}")
print(sim)

# Formatting gives back a canonical script that parses to the same thing.
print(format_script(ast))
assert parse(format_script(ast)) == ast

# Mistakes are reported with positions, all at once.
broken = "scenario A\nego crosses\nparam EGO_SPEED in [80, 5] kmh\nhonk\n"
for diag in check(broken):
    print(diag)
try:
    parse(broken)
except ScriptError as err:
    print(len(err.diagnostics), "errors")
