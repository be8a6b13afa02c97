"""Fixed-timestep 2D kinematic simulation of the ego/adversary interaction.

Both vehicles are point masses moving along piecewise line/arc paths. The
adversary holds its speed; the ego brakes at ``ego_brake * MAX_DECEL`` while
the pair is closer than ``safety_dist`` and still closing, and otherwise keeps
its current speed (it never re-accelerates).

Separation between samples is tracked by linear interpolation of the relative
position, so near misses and contacts are not lost between steps.
"""

from __future__ import annotations

import bisect
import csv
import dataclasses
import functools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .scenario_model import (
    Approach,
    ConfigError,
    Genome,
    IntersectionLayout,
    LaneLayout,
    ManeuverKind,
    ScenarioTemplate,
)

MAX_DECEL = 8.0  # m/s^2, full brake
KMH = 1.0 / 3.6


@dataclass(frozen=True)
class SimulationConfig:
    timestep: float = 0.05
    horizon: float = 20.0
    interaction_radius: float = 50.0

    def __post_init__(self):
        if not self.timestep > 0:
            raise ConfigError("timestep must be positive")
        if not self.horizon >= 10 * self.timestep:
            raise ConfigError("horizon must be at least ten timesteps")
        if not self.interaction_radius > 0:
            raise ConfigError("interaction_radius must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.timestep))


# ---------------------------------------------------------------------------
# Paths


@dataclass(frozen=True)
class Segment:
    s0: float
    length: float
    x0: float
    y0: float
    heading0: float
    curvature: float  # 0 for lines, +1/R left, -1/R right

    def at(self, ds: float) -> tuple[float, float, float]:
        h0 = self.heading0
        k = self.curvature
        if k == 0.0:
            return self.x0 + ds * math.cos(h0), self.y0 + ds * math.sin(h0), h0
        h = h0 + k * ds
        return (
            self.x0 + (math.sin(h) - math.sin(h0)) / k,
            self.y0 - (math.cos(h) - math.cos(h0)) / k,
            h,
        )


@dataclass(frozen=True)
class PathDef:
    """Arc-length parameterized path. Positions outside [0, total_length]
    extrapolate along the first/last straight segment."""

    segments: tuple[Segment, ...]
    starts: tuple[float, ...] = field(repr=False, compare=False, default=())

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(seg.s0 for seg in self.segments))

    @property
    def total_length(self) -> float:
        last = self.segments[-1]
        return last.s0 + last.length

    def pose(self, s: float) -> tuple[float, float, float]:
        if s <= 0.0:
            seg = self.segments[0]
        else:
            i = bisect.bisect_right(self.starts, s) - 1
            seg = self.segments[i]
        return seg.at(s - seg.s0)

    def sample(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Arc positions and (n, 2) points at ``step`` spacing, endpoints included."""
        n = int(math.ceil(self.total_length / step)) + 1
        s = np.linspace(0.0, self.total_length, n)
        pts = np.array([self.pose(v)[:2] for v in s])
        return s, pts


def _canonical_segments(
    maneuver: ManeuverKind, own: float, cross: float, layout: IntersectionLayout
) -> list[tuple[float, float, float, float, float]]:
    """(x0, y0, heading, length, curvature) pieces for a northbound approach in lane x=own."""
    L = layout.arm_length
    north = math.pi / 2
    if maneuver is ManeuverKind.CROSS_STRAIGHT:
        return [(own, -L, north, 2 * L, 0.0)]
    if maneuver is ManeuverKind.LEFT_TURN:
        R = layout.turn_radius_left
        return [
            (own, -L, north, L + cross - R, 0.0),
            (own, cross - R, north, R * math.pi / 2, 1.0 / R),
            (own - R, cross, math.pi, L + own - R, 0.0),
        ]
    R = layout.turn_radius_right
    return [
        (own, -L, north, L - cross - R, 0.0),
        (own, -cross - R, north, R * math.pi / 2, -1.0 / R),
        (own + R, -cross, 0.0, L - own - R, 0.0),
    ]


def _make_path(pieces, rotation: float, center: tuple[float, float]) -> PathDef:
    c, s = math.cos(rotation), math.sin(rotation)
    cx, cy = center
    segs = []
    s0 = 0.0
    for x0, y0, h0, length, k in pieces:
        if length <= 0:
            raise ConfigError("intersection geometry leaves no room for a turn")
        segs.append(Segment(s0, length, cx + c * x0 - s * y0, cy + s * x0 + c * y0, h0 + rotation, k))
        s0 += length
    return PathDef(tuple(segs))


class PathPair(NamedTuple):
    ego: PathDef
    adv: PathDef
    ego_conflict_s: float
    adv_conflict_s: float
    conflict_point: tuple[float, float]
    min_distance: float


def lane_offsets(layout: LaneLayout, geometry: IntersectionLayout) -> tuple[float, float]:
    """Lane-center offsets of the ego road and the crossing road.

    In the three-lane layout the crossing road carries a central turn lane, so its
    travel lanes sit a full lane width off the center line.
    """
    w = geometry.lane_width
    if layout is LaneLayout.THREE_LANE:
        return w / 2, w
    return w / 2, w / 2


def adversary_rotation(template: ScenarioTemplate) -> float:
    if template.adv_approach is Approach.SAME_ROAD_OPPOSITE:
        return math.pi
    # Perpendicular traffic comes from the side it can conflict with: from the
    # left when the ego turns right (merging conflict), otherwise from the right.
    if template.ego_maneuver is ManeuverKind.RIGHT_TURN:
        return -math.pi / 2
    return math.pi / 2


def build_paths(template: ScenarioTemplate) -> PathPair:
    return _build_paths_cached(
        template.lane_layout,
        template.ego_maneuver,
        template.adv_maneuver,
        template.adv_approach,
        template.geometry,
    )


@functools.lru_cache(maxsize=64)
def _build_paths_cached(layout, ego_maneuver, adv_maneuver, approach, geometry) -> PathPair:
    template = ScenarioTemplate("_", layout, ego_maneuver, adv_maneuver, approach, geometry)
    ns, ew = lane_offsets(layout, geometry)
    center = geometry.conflict_zone_center
    ego = _make_path(_canonical_segments(ego_maneuver, ns, ew, geometry), 0.0, center)
    rot = adversary_rotation(template)
    if approach is Approach.SAME_ROAD_OPPOSITE:
        own, cross = ns, ew
    else:
        own, cross = ew, ns
    adv = _make_path(_canonical_segments(adv_maneuver, own, cross, geometry), rot, center)

    # Conflict point: first point along the ego path that attains the minimum
    # path-to-path distance (merging paths overlap over a whole stretch).
    ego_s, ego_pts = ego.sample(0.01)
    adv_s, adv_pts = adv.sample(0.01)
    dist, idx = cKDTree(adv_pts).query(ego_pts)
    first = int(np.flatnonzero(dist <= dist.min() + 0.01)[0])
    point = (ego_pts[first] + adv_pts[idx[first]]) / 2
    return PathPair(
        ego,
        adv,
        float(ego_s[first]),
        float(adv_s[idx[first]]),
        (float(point[0]), float(point[1])),
        float(dist.min()),
    )


# ---------------------------------------------------------------------------
# Dynamics


@dataclass(frozen=True)
class VehicleState:
    arc_position: float
    speed: float  # m/s
    x: float
    y: float
    heading: float

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y


def state_on(path: PathDef, s: float, speed: float) -> VehicleState:
    x, y, h = path.pose(s)
    return VehicleState(s, speed, x, y, h)


def compute_ttc(separation: float, closing_speed: float) -> float:
    """Time to collision in seconds; +inf when the pair is not approaching."""
    if separation < 0:
        raise ValueError("separation must be non-negative")
    if closing_speed > 0:
        return separation / closing_speed
    return math.inf


def relative_kinematics(ego: VehicleState, adv: VehicleState) -> tuple[float, float]:
    """Separation (m) and closing speed (m/s, positive when approaching)."""
    rx, ry = adv.x - ego.x, adv.y - ego.y
    vx = adv.speed * math.cos(adv.heading) - ego.speed * math.cos(ego.heading)
    vy = adv.speed * math.sin(adv.heading) - ego.speed * math.sin(ego.heading)
    sep = math.hypot(rx, ry)
    if sep == 0.0:
        return 0.0, math.hypot(vx, vy)
    return sep, -(rx * vx + ry * vy) / sep


def ego_braking(separation: float, closing: float, genome: Genome) -> bool:
    return separation < genome.safety_dist and closing > 0


def braking_distance(speed: float, decel: float, duration: float) -> float:
    """Distance covered in ``duration`` under constant deceleration, stopping at zero speed."""
    if decel <= 0.0:
        return speed * duration
    t = min(duration, speed / decel)
    return speed * t - 0.5 * decel * t * t


def step(
    states: tuple[VehicleState, VehicleState],
    genome: Genome,
    paths: PathPair,
    dt: float,
) -> tuple[VehicleState, VehicleState]:
    """Advance both vehicles by ``dt``.

    Braking that starts inside the step begins at the interpolated instant the
    pair enters ``safety_dist``, so stopping points do not depend on ``dt``.
    """
    ego, adv = states
    new_adv = state_on(paths.adv, adv.arc_position + adv.speed * dt, adv.speed)
    decel = genome.ego_brake * MAX_DECEL
    v = ego.speed
    sep, closing = relative_kinematics(ego, adv)
    if ego_braking(sep, closing, genome):
        onset = 0.0
    else:
        coast = state_on(paths.ego, ego.arc_position + v * dt, v)
        r0x, r0y = adv.x - ego.x, adv.y - ego.y
        r1x, r1y = new_adv.x - coast.x, new_adv.y - coast.y
        if decel == 0.0 or _closest_on_interval(r0x, r0y, r1x, r1y) >= genome.safety_dist:
            return coast, new_adv
        onset = _contact_fraction(r0x, r0y, r1x, r1y, genome.safety_dist)
    braking = (1.0 - onset) * dt
    ds = v * onset * dt + braking_distance(v, decel, braking)
    v_new = max(0.0, v - decel * braking)
    return state_on(paths.ego, ego.arc_position + ds, v_new), new_adv


def initial_states(genome: Genome, paths: PathPair) -> tuple[VehicleState, VehicleState]:
    """Spawn each vehicle ``init_dist`` meters before its conflict point, along its path."""
    return (
        state_on(paths.ego, paths.ego_conflict_s - genome.ego_init_dist, genome.ego_speed * KMH),
        state_on(paths.adv, paths.adv_conflict_s - genome.adv_init_dist, genome.adv_speed * KMH),
    )


# ---------------------------------------------------------------------------
# Outcome


class InvalidReason(str, Enum):
    NO_INTERACTION = "no_interaction"
    DEGENERATE_SPAWN_OVERLAP = "degenerate_spawn_overlap"


class TraceRow(NamedTuple):
    time: float
    ego: VehicleState
    adv: VehicleState
    separation: float
    closing_speed: float


@dataclass(frozen=True)
class SimulationOutcome:
    valid: bool
    invalid_reason: InvalidReason | None
    collision: bool
    md_cm: float | None
    d_ms_cm: float | None
    ttc_ms_cs: float | None  # may be math.inf
    trace: tuple[TraceRow, ...] = field(default=(), repr=False, compare=False)
    wall_ms: float | None = field(default=None, compare=False)

    def without_trace(self) -> "SimulationOutcome":
        return dataclasses.replace(self, trace=())


def _closest_on_interval(r0x, r0y, r1x, r1y) -> float:
    """Minimum |r| over the segment r0 -> r1."""
    dx, dy = r1x - r0x, r1y - r0y
    dd = dx * dx + dy * dy
    if dd == 0.0:
        return math.hypot(r0x, r0y)
    u = -(r0x * dx + r0y * dy) / dd
    u = min(max(u, 0.0), 1.0)
    return math.hypot(r0x + u * dx, r0y + u * dy)


def _contact_fraction(r0x, r0y, r1x, r1y, radius) -> float:
    """First u in [0, 1] with |r0 + u (r1 - r0)| = radius. Caller ensures it exists."""
    dx, dy = r1x - r0x, r1y - r0y
    a = dx * dx + dy * dy
    b = 2 * (r0x * dx + r0y * dy)
    c = r0x * r0x + r0y * r0y - radius * radius
    if a == 0.0 or c <= 0.0:
        return 0.0
    disc = max(b * b - 4 * a * c, 0.0)
    return min(max((-b - math.sqrt(disc)) / (2 * a), 0.0), 1.0)


def _lerp_state(p: VehicleState, q: VehicleState, u: float) -> VehicleState:
    dh = math.atan2(math.sin(q.heading - p.heading), math.cos(q.heading - p.heading))
    return VehicleState(
        p.arc_position + u * (q.arc_position - p.arc_position),
        p.speed + u * (q.speed - p.speed),
        p.x + u * (q.x - p.x),
        p.y + u * (q.y - p.y),
        p.heading + u * dh,
    )


def classify_validity(
    trace: Sequence[TraceRow], config: SimulationConfig, crash_dist: float | None = None
) -> tuple[bool, InvalidReason | None]:
    """Invalid on spawn overlap (needs ``crash_dist``) or when the pair never
    comes closer than the interaction radius."""
    if not trace:
        raise ValueError("empty trace")
    if crash_dist is not None and trace[0].separation < crash_dist:
        return False, InvalidReason.DEGENERATE_SPAWN_OVERLAP
    if min(row.separation for row in trace) >= config.interaction_radius:
        return False, InvalidReason.NO_INTERACTION
    return True, None


def run(template: ScenarioTemplate, genome: Genome, config: SimulationConfig = SimulationConfig()) -> SimulationOutcome:
    paths = build_paths(template)
    dt = config.timestep
    crash = genome.crash_dist

    ego, adv = initial_states(genome, paths)
    sep, closing = relative_kinematics(ego, adv)
    trace = [TraceRow(0.0, ego, adv, sep, closing)]
    if sep < crash:
        return SimulationOutcome(False, InvalidReason.DEGENERATE_SPAWN_OVERLAP, False, None, None, None, tuple(trace))

    md = sep
    collision = sep <= crash
    k = 0
    while not collision and k < config.n_steps:
        k += 1
        new_ego, new_adv = step((ego, adv), genome, paths, dt)
        r0x, r0y = adv.x - ego.x, adv.y - ego.y
        r1x, r1y = new_adv.x - new_ego.x, new_adv.y - new_ego.y
        gap = _closest_on_interval(r0x, r0y, r1x, r1y)
        if gap <= crash:
            u = _contact_fraction(r0x, r0y, r1x, r1y, crash)
            new_ego = _lerp_state(ego, new_ego, u)
            new_adv = _lerp_state(adv, new_adv, u)
            t = (k - 1 + u) * dt
            collision = True
        else:
            t = k * dt
        ego, adv = new_ego, new_adv
        sep, closing = relative_kinematics(ego, adv)
        if collision:
            # the contact row sits on the crash radius; drop roundoff above it
            sep = min(sep, crash)
        trace.append(TraceRow(t, ego, adv, sep, closing))
        md = min(md, gap, sep)

    valid, reason = classify_validity(trace, config)
    if not valid:
        return SimulationOutcome(False, reason, False, None, None, None, tuple(trace))

    # Earliest step of maximum closing speed.
    best = max(range(len(trace)), key=lambda i: (trace[i].closing_speed, -i))
    row = trace[best]
    ttc = compute_ttc(row.separation, row.closing_speed)
    return SimulationOutcome(
        valid=True,
        invalid_reason=None,
        collision=collision,
        md_cm=md * 100.0,
        d_ms_cm=row.separation * 100.0,
        ttc_ms_cs=ttc * 100.0,
        trace=tuple(trace),
    )


TRACE_HEADER = ("time_s", "ego_x", "ego_y", "ego_v", "adv_x", "adv_y", "adv_v", "separation_m", "closing_mps")


def write_trace_csv(outcome: SimulationOutcome, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in outcome.trace:
            values = (
                row.time, row.ego.x, row.ego.y, row.ego.speed,
                row.adv.x, row.adv.y, row.adv.speed, row.separation, row.closing_speed,
            )
            writer.writerow([f"{v:.6f}" for v in values])
