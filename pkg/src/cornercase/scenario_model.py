"""Scenario genome, parameter ranges and the six intersection templates."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

GENE_NAMES = (
    "ego_init_dist",
    "ego_speed",
    "ego_brake",
    "adv_init_dist",
    "adv_speed",
    "safety_dist",
    "crash_dist",
)

INIT_DIST_CAP = 150.0


class ConfigError(ValueError):
    """Raised for malformed parameter ranges, layouts or experiment settings."""


class Unit(str, Enum):
    KM_PER_H = "km_per_h"
    METERS = "meters"
    DIMENSIONLESS = "dimensionless"


class ManeuverKind(str, Enum):
    CROSS_STRAIGHT = "cross_straight"
    LEFT_TURN = "left_turn"
    RIGHT_TURN = "right_turn"


class LaneLayout(str, Enum):
    TWO_BY_TWO = "two_by_two"
    THREE_LANE = "three_lane"


class Approach(str, Enum):
    SAME_ROAD_OPPOSITE = "same_road_opposite"
    PERPENDICULAR = "perpendicular"


@dataclass(frozen=True)
class ParameterRange:
    name: str
    low: float
    high: float
    unit: Unit

    def __post_init__(self):
        if self.name not in GENE_NAMES:
            raise ConfigError(f"unknown parameter {self.name!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ConfigError(f"{self.name}: range bounds must be finite")
        if self.low > self.high:
            raise ConfigError(f"{self.name}: range low exceeds high")

    def clamp(self, value: float) -> float:
        return min(max(value, self.low), self.high)


DEFAULT_RANGES: tuple[ParameterRange, ...] = (
    ParameterRange("ego_init_dist", 0.0, INIT_DIST_CAP, Unit.METERS),
    ParameterRange("ego_speed", 5.0, 80.0, Unit.KM_PER_H),
    ParameterRange("ego_brake", 0.0, 1.0, Unit.DIMENSIONLESS),
    ParameterRange("adv_init_dist", 0.0, INIT_DIST_CAP, Unit.METERS),
    ParameterRange("adv_speed", 5.0, 80.0, Unit.KM_PER_H),
    ParameterRange("safety_dist", 0.0, 20.0, Unit.METERS),
    ParameterRange("crash_dist", 0.0, 5.0, Unit.METERS),
)

GENE_UNITS = {r.name: r.unit for r in DEFAULT_RANGES}


@dataclass(frozen=True)
class Genome:
    """One scenario instance. Speeds in km/h, distances in meters."""

    ego_init_dist: float
    ego_speed: float
    ego_brake: float
    adv_init_dist: float
    adv_speed: float
    safety_dist: float
    crash_dist: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in GENE_NAMES)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "Genome":
        if len(values) != len(GENE_NAMES):
            raise ValueError(f"expected {len(GENE_NAMES)} genes, got {len(values)}")
        return cls(*(float(v) for v in values))

    def replace(self, **changes: float) -> "Genome":
        return dataclasses.replace(self, **changes)


def ranges_by_name(ranges: Iterable[ParameterRange]) -> dict[str, ParameterRange]:
    """Index ranges by gene name, checking that all seven genes appear exactly once."""
    table: dict[str, ParameterRange] = {}
    for r in ranges:
        if r.name in table:
            raise ConfigError(f"duplicate range for {r.name!r}")
        table[r.name] = r
    missing = [name for name in GENE_NAMES if name not in table]
    if missing:
        raise ConfigError(f"missing ranges for {', '.join(missing)}")
    return table


def ordered_ranges(ranges: Iterable[ParameterRange]) -> tuple[ParameterRange, ...]:
    table = ranges_by_name(ranges)
    return tuple(table[name] for name in GENE_NAMES)


def sample_random_genome(ranges: Iterable[ParameterRange], rng: np.random.Generator) -> Genome:
    """Draw every gene independently and uniformly from its range."""
    ordered = ordered_ranges(ranges)
    values = [r.low + (r.high - r.low) * rng.random() for r in ordered]
    return Genome.from_sequence(values)


def clamp_genome(g: Genome, ranges: Iterable[ParameterRange]) -> Genome:
    ordered = ordered_ranges(ranges)
    return Genome.from_sequence([r.clamp(v) for r, v in zip(ordered, g.as_tuple())])


def genome_in_ranges(g: Genome, ranges: Iterable[ParameterRange]) -> bool:
    ordered = ordered_ranges(ranges)
    return all(r.low <= v <= r.high for r, v in zip(ordered, g.as_tuple()))


@dataclass(frozen=True)
class IntersectionLayout:
    """Intersection geometry. ``conflict_zone_center`` is the intersection origin."""

    lane_width: float = 3.5
    arm_length: float = 160.0
    turn_radius_left: float = 10.5
    turn_radius_right: float = 6.0
    conflict_zone_center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("lane_width", "arm_length", "turn_radius_left", "turn_radius_right"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive length, got {value}")
        if not self.turn_radius_right < self.turn_radius_left:
            raise ConfigError("turn_radius_right must be smaller than turn_radius_left")
        object.__setattr__(
            self, "conflict_zone_center", tuple(float(c) for c in self.conflict_zone_center)
        )


@dataclass(frozen=True)
class ScenarioTemplate:
    id: str
    lane_layout: LaneLayout
    ego_maneuver: ManeuverKind
    adv_maneuver: ManeuverKind
    adv_approach: Approach
    geometry: IntersectionLayout = IntersectionLayout()


SCENARIO_IDS = ("A", "B", "C", "D", "E", "F")

# Scenario C lists "crossing or left turn" for the ego; the crossing variant is used.
_TEMPLATE_ROWS = {
    "A": (LaneLayout.TWO_BY_TWO, ManeuverKind.CROSS_STRAIGHT, ManeuverKind.LEFT_TURN, Approach.SAME_ROAD_OPPOSITE),
    "B": (LaneLayout.TWO_BY_TWO, ManeuverKind.LEFT_TURN, ManeuverKind.CROSS_STRAIGHT, Approach.PERPENDICULAR),
    "C": (LaneLayout.TWO_BY_TWO, ManeuverKind.CROSS_STRAIGHT, ManeuverKind.LEFT_TURN, Approach.PERPENDICULAR),
    "D": (LaneLayout.TWO_BY_TWO, ManeuverKind.RIGHT_TURN, ManeuverKind.LEFT_TURN, Approach.SAME_ROAD_OPPOSITE),
    "E": (LaneLayout.TWO_BY_TWO, ManeuverKind.RIGHT_TURN, ManeuverKind.CROSS_STRAIGHT, Approach.PERPENDICULAR),
    "F": (LaneLayout.THREE_LANE, ManeuverKind.LEFT_TURN, ManeuverKind.CROSS_STRAIGHT, Approach.PERPENDICULAR),
}


def template_for(scenario_id: str, geometry: IntersectionLayout | None = None) -> ScenarioTemplate:
    """Return the fixed template for one of the six intersection scenarios A-F."""
    try:
        layout, ego, adv, approach = _TEMPLATE_ROWS[scenario_id]
    except KeyError:
        raise ValueError(
            f"unknown scenario id {scenario_id!r}; expected one of {', '.join(SCENARIO_IDS)}"
        ) from None
    return ScenarioTemplate(
        id=scenario_id,
        lane_layout=layout,
        ego_maneuver=ego,
        adv_maneuver=adv,
        adv_approach=approach,
        geometry=geometry if geometry is not None else IntersectionLayout(),
    )
