import numpy as np
import pytest
from scipy import stats

from src.domain.errors import ReductionStall
from src.domain.hyperbolic import (
    GroupElement,
    base_cosh_distance,
    chart_arrays,
    flow_matrices,
    rotation_matrix,
    same_element,
)
from src.domain.surface import (
    BOLZA_COMMUTATORS,
    BOLZA_RELATION,
    HALF_SIDE_DISTANCE,
    FuchsianGroup,
    bolza_group,
)


def test_bolza_relation_holds(group):
    assert group.relation_residual() <= 1e-10


def test_relation_is_a_product_of_two_commutators(group):
    product = np.eye(2)
    for a, b in BOLZA_COMMUTATORS:
        ga, gb = group.word_element(a).m, group.word_element(b).m
        product = product @ ga @ gb @ np.linalg.inv(ga) @ np.linalg.inv(gb)

    assert BOLZA_RELATION == (4, 7, 2, 5, 0, 3, 6, 1)
    assert np.max(np.abs(product - np.eye(2))) <= 1e-10


def test_generators_are_hyperbolic_with_bolza_trace(group):
    for g in group.generators:
        assert np.trace(g.m) == pytest.approx(2.0 + 2.0 * np.sqrt(2.0), rel=1e-12)


def test_word_cache_holds_reduced_words(group):
    # 8 letters, then 7 continuations per non-backtracking step
    assert len(group.word_cache) == 8 + 56 + 392 + 2744


def test_samples_lie_in_the_domain(group):
    sample = group.sample_liouville_array(2_000, seed=3)

    assert sample.matrices.shape == (2_000, 2, 2)
    assert np.all(group.contains(sample.matrices))


def test_sampler_is_deterministic(group):
    a = group.sample_liouville_array(500, seed=9).matrices
    b = group.sample_liouville_array(500, seed=9).matrices

    assert np.array_equal(a, b)


def test_area_estimate_matches_gauss_bonnet(group):
    sample = group.sample_liouville_array(20_000, seed=5)

    assert sample.area_estimate == pytest.approx(4.0 * np.pi, rel=0.05)


def test_reduce_returns_domain_point_and_transport(group, samples):
    word = group.word_element((0, 1, 6, 3, 5))
    for g in samples[:5]:
        far = word @ g
        reduced = group.reduce(far)

        assert group.contains(reduced.g.m)
        assert same_element(reduced.transport.m @ far.m, reduced.g.m, 1e-9)


def test_vectorized_reduction_agrees_with_single(group, samples):
    word = group.word_element((3, 3, 0))
    far = np.stack([(word @ g).m for g in samples])
    reduced, transport = group.reduce_matrices(far)

    assert np.all(group.contains(reduced))
    for k, m in enumerate(far):
        assert same_element(transport[k] @ m, reduced[k], 1e-9)


def test_reduction_stall_with_a_short_word_cache():
    bolza = bolza_group(4)
    # one generator only: its powers slide along the imaginary axis and never
    # approach a point far out on the perpendicular geodesic
    crippled = FuchsianGroup.build(list(bolza.generators[:1]), (0, 4), bolza.domain_radius, 1)
    far = GroupElement(rotation_matrix(np.pi / 4.0) @ np.diag([np.exp(5.0), np.exp(-5.0)]))

    with pytest.raises(ReductionStall, match="reduction stall"):
        crippled.reduce(far)


def test_orbit_ball_contains_side_pairings(group):
    ball = group.orbit_ball(2.0 * HALF_SIDE_DISTANCE + 1e-6)

    assert len(ball) >= 9
    assert np.all(base_cosh_distance(ball) <= np.cosh(2.0 * HALF_SIDE_DISTANCE + 1e-6))
    for sigma in group.side_pairings:
        assert any(same_element(sigma, m, 1e-8) for m in ball)


def test_side_pairings_move_i_across_a_side(group):
    for sigma in group.side_pairings:
        assert np.arccosh(base_cosh_distance(sigma)) == pytest.approx(2.0 * HALF_SIDE_DISTANCE, rel=1e-12)


def test_reduction_is_invariant_under_every_side_pairing(group):
    m = group.sample_liouville_array(500, seed=17).matrices
    reduced, _ = group.reduce_matrices(m)

    for sigma in group.side_pairings:
        moved, _ = group.reduce_matrices(sigma @ m)
        assert all(same_element(a, b, 1e-8) for a, b in zip(moved, reduced))


def test_sampler_splits_the_domain_evenly_across_the_imaginary_axis(group):
    n = 100_000
    u, _, _, _ = chart_arrays(group.sample_liouville_array(n, seed=19).matrices)
    sigma = np.sqrt(0.25 / n)

    assert abs(np.mean(u < 0.0) - 0.5) <= 3.0 * sigma


def test_sampler_is_invariant_under_the_geodesic_flow(group):
    n = 20_000
    pushed, _ = group.reduce_matrices(flow_matrices(group.sample_liouville_array(n, seed=23).matrices, 1.0))
    fresh = group.sample_liouville_array(n, seed=29).matrices

    for a, b in zip(chart_arrays(pushed), chart_arrays(fresh)):
        assert stats.ks_2samp(a, b).pvalue > 1e-3
