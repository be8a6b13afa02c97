import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornercase.scenario_model import (
    DEFAULT_RANGES,
    GENE_NAMES,
    SCENARIO_IDS,
    Approach,
    ConfigError,
    Genome,
    IntersectionLayout,
    LaneLayout,
    ManeuverKind,
    ParameterRange,
    Unit,
    clamp_genome,
    genome_in_ranges,
    sample_random_genome,
    template_for,
)


def test_degenerate_ranges_give_constant_genome():
    ranges = [ParameterRange(r.name, 3.0, 3.0, r.unit) for r in DEFAULT_RANGES]
    g = sample_random_genome(ranges, np.random.default_rng(0))
    assert g.as_tuple() == (3.0,) * 7


def test_uniform_mean_of_ego_speed():
    rng = np.random.default_rng(123)
    draws = [sample_random_genome(DEFAULT_RANGES, rng).ego_speed for _ in range(10_000)]
    assert abs(np.mean(draws) - 42.5) <= 2.0


def test_sampling_is_seeded():
    a = sample_random_genome(DEFAULT_RANGES, np.random.default_rng(42))
    b = sample_random_genome(DEFAULT_RANGES, np.random.default_rng(42))
    assert a == b


def test_range_order_does_not_matter():
    shuffled = list(reversed(DEFAULT_RANGES))
    a = sample_random_genome(DEFAULT_RANGES, np.random.default_rng(1))
    b = sample_random_genome(shuffled, np.random.default_rng(1))
    assert a == b


@pytest.mark.parametrize(
    "ranges",
    [DEFAULT_RANGES[:-1], DEFAULT_RANGES + (DEFAULT_RANGES[0],)],
    ids=["missing", "duplicate"],
)
def test_bad_range_sets_are_config_errors(ranges):
    with pytest.raises(ConfigError):
        sample_random_genome(ranges, np.random.default_rng(0))


def test_parameter_range_rejects_inverted_and_unbounded():
    with pytest.raises(ConfigError):
        ParameterRange("ego_speed", 80, 5, Unit.KM_PER_H)
    with pytest.raises(ConfigError):
        ParameterRange("ego_init_dist", 0, float("inf"), Unit.METERS)
    with pytest.raises(ConfigError):
        ParameterRange("speed", 0, 1, Unit.KM_PER_H)


def test_sampled_genomes_satisfy_invariants_over_many_seeds():
    for seed in range(100_000):
        g = sample_random_genome(DEFAULT_RANGES, np.random.default_rng(seed))
        if not genome_in_ranges(g, DEFAULT_RANGES):
            pytest.fail(f"seed {seed} produced {g}")


BASE = Genome(10.0, 30.0, 0.5, 20.0, 40.0, 5.0, 1.0)


def test_clamp_examples():
    assert clamp_genome(BASE.replace(ego_brake=1.3), DEFAULT_RANGES).ego_brake == 1.0
    assert clamp_genome(BASE, DEFAULT_RANGES) == BASE
    assert clamp_genome(BASE.replace(ego_speed=-4.0), DEFAULT_RANGES).ego_speed == 5.0


@given(st.lists(st.floats(-1e6, 1e6), min_size=7, max_size=7))
def test_clamp_is_idempotent_and_legal(values):
    once = clamp_genome(Genome.from_sequence(values), DEFAULT_RANGES)
    assert genome_in_ranges(once, DEFAULT_RANGES)
    assert clamp_genome(once, DEFAULT_RANGES) == once


def test_template_rows():
    a = template_for("A")
    assert (a.ego_maneuver, a.adv_maneuver, a.adv_approach, a.lane_layout) == (
        ManeuverKind.CROSS_STRAIGHT,
        ManeuverKind.LEFT_TURN,
        Approach.SAME_ROAD_OPPOSITE,
        LaneLayout.TWO_BY_TWO,
    )
    f = template_for("F")
    assert (f.ego_maneuver, f.adv_maneuver, f.adv_approach, f.lane_layout) == (
        ManeuverKind.LEFT_TURN,
        ManeuverKind.CROSS_STRAIGHT,
        Approach.PERPENDICULAR,
        LaneLayout.THREE_LANE,
    )
    d = template_for("D")
    assert (d.ego_maneuver, d.adv_maneuver, d.adv_approach) == (
        ManeuverKind.RIGHT_TURN,
        ManeuverKind.LEFT_TURN,
        Approach.SAME_ROAD_OPPOSITE,
    )


def test_approach_split():
    perpendicular = {sid for sid in SCENARIO_IDS if template_for(sid).adv_approach is Approach.PERPENDICULAR}
    assert perpendicular == {"B", "C", "E", "F"}


def test_templates_are_deterministic_and_total():
    for sid in SCENARIO_IDS:
        assert template_for(sid) == template_for(sid)


def test_unknown_template_id():
    with pytest.raises(ValueError, match="unknown scenario"):
        template_for("G")


def test_layout_validation():
    with pytest.raises(ConfigError):
        IntersectionLayout(lane_width=0)
    with pytest.raises(ConfigError):
        IntersectionLayout(turn_radius_left=5, turn_radius_right=6)


def test_genome_order_matches_gene_names():
    g = Genome.from_sequence(range(7))
    assert [getattr(g, n) for n in GENE_NAMES] == list(range(7))
