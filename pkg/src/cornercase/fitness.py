"""Multi-factor risk score of a simulated scenario.

Each continuous metric is scored by a half-open band table ``[lower, next_lower[``
and the collision flag adds a fixed bonus. Invalid runs score -1.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Mapping

from .scenario_model import ConfigError
from .simulator import SimulationOutcome

COLLISION_SCORE = 10
INVALID_SCORE = -1


@dataclass(frozen=True)
class BandTable:
    """Lower-inclusive band edges and the score of each band. ``edges[0]`` must be 0."""

    edges: tuple[float, ...]
    scores: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(self, "scores", tuple(int(s) for s in self.scores))
        if len(self.edges) != len(self.scores) or not self.edges:
            raise ConfigError("band table needs one score per edge")
        if self.edges[0] != 0.0:
            raise ConfigError("first band must start at 0")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ConfigError("band edges must be strictly increasing")

    def __call__(self, value: float) -> int:
        if math.isnan(value) or value < 0:
            raise ValueError(f"band input must be non-negative, got {value}")
        return self.scores[bisect.bisect_right(self.edges, value) - 1]


MD_BANDS = BandTable((0, 820, 1100, 1376, 1655), (4, 3, 2, 1, 0))
# The published D_MS rows overlap ([3780, 4255[ -> 3 and [4020, 4255[ -> 2);
# the 3-band ends at 4020 so that the five bands partition [0, inf).
D_MS_BANDS = BandTable((0, 3780, 4020, 4255, 4490), (4, 3, 2, 1, 0))
TTC_MS_BANDS = BandTable((0, 359, 394, 429, 464), (4, 3, 2, 1, 0))


@dataclass(frozen=True)
class FitnessTables:
    md: BandTable = MD_BANDS
    d_ms: BandTable = D_MS_BANDS
    ttc_ms: BandTable = TTC_MS_BANDS
    collision: int = COLLISION_SCORE

    @classmethod
    def from_mapping(cls, data: Mapping) -> "FitnessTables":
        """Build from ``{"md": {"edges": [...], "scores": [...]}, ...}``; missing keys keep defaults."""
        kwargs = {}
        for key in ("md", "d_ms", "ttc_ms"):
            if key in data:
                kwargs[key] = BandTable(tuple(data[key]["edges"]), tuple(data[key]["scores"]))
        if "collision" in data:
            kwargs["collision"] = int(data["collision"])
        unknown = set(data) - {"md", "d_ms", "ttc_ms", "collision"}
        if unknown:
            raise ConfigError(f"unknown fitness keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        out = {
            key: {"edges": list(getattr(self, key).edges), "scores": list(getattr(self, key).scores)}
            for key in ("md", "d_ms", "ttc_ms")
        }
        out["collision"] = self.collision
        return out


DEFAULT_TABLES = FitnessTables()


@dataclass(frozen=True)
class RiskScore:
    total: int
    c: int = 0
    md: int = 0
    d_ms: int = 0
    ttc_ms: int = 0
    parts: tuple[int, int, int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", (self.c, self.md, self.d_ms, self.ttc_ms))

    @property
    def valid(self) -> bool:
        return self.total != INVALID_SCORE


INVALID = RiskScore(INVALID_SCORE)


def score_collision(collision: bool, tables: FitnessTables = DEFAULT_TABLES) -> int:
    return tables.collision if collision else 0


def score_md(md_cm: float, tables: FitnessTables = DEFAULT_TABLES) -> int:
    return tables.md(md_cm)


def score_d_ms(d_ms_cm: float, tables: FitnessTables = DEFAULT_TABLES) -> int:
    return tables.d_ms(d_ms_cm)


def score_ttc_ms(ttc_cs: float, tables: FitnessTables = DEFAULT_TABLES) -> int:
    """``ttc_cs`` may be ``math.inf`` for a pair that never closes; that scores 0."""
    return tables.ttc_ms(ttc_cs)


def risk_level(outcome: SimulationOutcome, tables: FitnessTables = DEFAULT_TABLES) -> RiskScore:
    if not outcome.valid:
        return INVALID
    c = score_collision(outcome.collision, tables)
    md = score_md(outcome.md_cm, tables)
    d_ms = score_d_ms(outcome.d_ms_cm, tables)
    ttc = score_ttc_ms(outcome.ttc_ms_cs, tables)
    return RiskScore(c + md + d_ms + ttc, c, md, d_ms, ttc)

