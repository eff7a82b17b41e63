import numpy as np
import pytest

from src.domain.errors import FlowTimeOverflow, OffShellPoint
from src.domain.hyperbolic import (
    FLOW_GENERATOR,
    STABLE_GENERATOR,
    UNSTABLE_GENERATOR,
    ChartPhasePoint,
    GroupElement,
    canonicalize,
    flow_matrices,
    from_chart,
    geodesic_flow,
    hyperbolic_distance,
    local_sasaki_distance,
    perp_covector,
    pushforward,
    sasaki_inner,
    stable_matrices,
    to_chart,
    unit_horocycle_unstable,
    unstable_jacobian_growth,
    unstable_matrices,
)


def _random_elements(rng, n):
    a, b, c = rng.normal(size=(3, n))
    a = np.abs(a) + 0.5
    d = (1.0 + b * c) / a
    return canonicalize(np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2))


def test_canonicalize_fixes_sign_and_determinant():
    m = canonicalize(np.array([[-2.0, -1.0], [-3.0, -2.0]]) * 1.0000001)

    assert m[0, 0] > 0
    assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-13)


def test_group_element_equality_is_projective():
    g = GroupElement.from_entries(2.0, 1.0, 1.0, 1.0)
    minus = GroupElement(-g.m)

    assert g.isclose(minus)
    assert (g @ g.inverse()).isclose(GroupElement.identity())


def test_frame_is_orthonormal():
    frame = [FLOW_GENERATOR, STABLE_GENERATOR, UNSTABLE_GENERATOR]
    gram = np.array([[sasaki_inner(x, y) for y in frame] for x in frame])

    assert np.allclose(gram, np.eye(3), atol=1e-15)


def test_horocycle_commutation_relations(rng):
    n = 10_000
    m = _random_elements(rng, n)
    t = rng.uniform(-3.0, 3.0, n)
    tau = rng.uniform(-1.0, 1.0, n)

    left_u = flow_matrices(unstable_matrices(m, tau), t)
    right_u = unstable_matrices(flow_matrices(m, t), np.exp(t) * tau)
    left_s = flow_matrices(stable_matrices(m, tau), t)
    right_s = stable_matrices(flow_matrices(m, t), np.exp(-t) * tau)

    scale = np.maximum(1.0, np.abs(left_u))
    assert np.max(np.abs(left_u - right_u) / scale) <= 1e-12
    scale = np.maximum(1.0, np.abs(left_s))
    assert np.max(np.abs(left_s - right_s) / scale) <= 1e-12


def test_geodesic_flow_is_a_one_parameter_group(rng):
    m = _random_elements(rng, 100)
    s, t = 1.3, -0.4

    assert np.allclose(flow_matrices(flow_matrices(m, s), t), flow_matrices(m, s + t), atol=1e-12)


def test_geodesic_flow_moves_base_point_at_unit_speed():
    g = GroupElement.identity()

    for t in (0.5, 2.0, 7.0):
        assert hyperbolic_distance(1j, geodesic_flow(g, t).base_point) == pytest.approx(t, rel=1e-12)


def test_flow_time_overflow():
    with pytest.raises(FlowTimeOverflow, match="flow-time overflow"):
        geodesic_flow(GroupElement.identity(), 701.0)


def test_unit_horocycle_has_unit_sasaki_speed():
    g = GroupElement.from_entries(1.5, 0.3, 0.2, (1.0 + 0.06) / 1.5)

    assert local_sasaki_distance(g, unit_horocycle_unstable(g, 1e-3)) == pytest.approx(1e-3, rel=1e-8)


def test_unstable_growth_is_exponential():
    g = GroupElement.identity()

    for t in (0.0, 1.0, 4.0):
        assert unstable_jacobian_growth(g, t) == pytest.approx(np.exp(t), rel=1e-14)
    assert np.allclose(pushforward(STABLE_GENERATOR, 2.0), np.exp(-2.0) * STABLE_GENERATOR)


def test_chart_of_identity_points_up():
    p = to_chart(GroupElement.identity())

    assert (p.u, p.v) == pytest.approx((0.0, 1.0))
    assert (p.p_u, p.p_v) == pytest.approx((0.0, 1.0))
    assert p.p0 == pytest.approx(0.5)


def test_chart_round_trip_on_unit_layer(rng):
    for m in _random_elements(rng, 20):
        g = GroupElement(m)
        assert from_chart(to_chart(g)).isclose(g, 1e-10)


def test_from_chart_rejects_off_shell_points():
    with pytest.raises(OffShellPoint, match="off-shell point"):
        from_chart(ChartPhasePoint(0.0, 1.0, 0.0, 2.0))


def test_chart_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        ChartPhasePoint(0.0, -1.0, 0.0, 1.0)


def test_perp_covector_is_a_counterclockwise_quarter_turn():
    p = perp_covector(ChartPhasePoint(0.0, 1.0, 1.0, 0.0))

    assert (p.p_u, p.p_v) == (0.0, 1.0)
