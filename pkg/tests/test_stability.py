import numpy as np
import pytest
from scipy import stats

from src.application.stability.transforms import (
    StabilityService,
    fit_constant,
    gap_slope,
    predicted_shape,
)
from src.application.dynamics.integrator import PerturbedFlowService
from src.application.potential.derivatives import FlowDerivativeService
from src.domain.hyperbolic import geodesic_flow, to_chart, unit_element
from src.domain.observable import ObservableKind, build_observable
from src.domain.paths import FlowPath, PathKind, path_integral
from src.domain.reports import StabilityComparison


def _row(eps: float, gap: float, shape: float) -> StabilityComparison:
    return StabilityComparison(
        eps=eps,
        s=0.05,
        T=6.0,
        N=3,
        lhs=0.0,
        rhs=gap,
        gap=gap,
        bound=float("nan"),
        shape=shape,
        C1=float("nan"),
        norm_xi=1.0,
        observable="V_pullback",
        rho0=[0.0, 1.0, 0.0, 1.0],
    )


def test_quadrature_limits(stability, samples):
    with pytest.raises(ValueError):
        stability.beta_u(samples[0], t_max=10.0)
    with pytest.raises(ValueError):
        stability.beta_s(samples[0], n_quad=100)


def test_beta_vanishes_for_a_constant_potential(flat_potential, samples):
    flows = PerturbedFlowService(flat_potential)
    service = StabilityService(flows, FlowDerivativeService(flat_potential))

    assert service.beta_u(samples[0]).value == 0.0
    assert service.beta_s(samples[0]).value == 0.0
    assert service.tail_bound() == 0.0


def test_beta_tail_is_negligible(stability, samples):
    beta = stability.beta_u(samples[0])

    assert np.isfinite(beta.value)
    assert 0.0 < beta.tail < 1e-11


def test_beta_u_cocycle_identity(stability, samples):
    for g in samples[:5]:
        for s in (0.5, 1.5, -0.7):
            assert stability.beta_u_cocycle_residual(g, s) <= 1e-8


def test_beta_is_converged_under_refinement(stability, potential, samples):
    def f_V(m, table):
        return potential.local_fields(m, table)[1]

    for g in samples[:5]:
        for kind, beta in ((PathKind.GEODESIC, stability.beta_u), (PathKind.REVERSED_GEODESIC, stability.beta_s)):
            path = FlowPath(kind, g.m)
            fine = path_integral(
                potential, f_V, path, 0.0, 30.0, weight=lambda tau: np.exp(-tau), limit=1000, epsabs=1e-16, epsrel=1e-14
            )
            assert beta(g).value == pytest.approx(fine / np.sqrt(2.0), abs=1e-10)


def test_cocycle_shift_is_bounded(stability, samples):
    with pytest.raises(ValueError):
        stability.beta_u_cocycle_residual(samples[0], 6.0)


def test_polynomial_has_no_constant_term(stability, start_point):
    poly = stability.poly_PN(start_point, 3)

    assert poly.N == 3
    assert poly(0.0) == 0.0
    assert poly.coeffs[1] == pytest.approx(start_point.norm * poly.derivatives[0] / np.sqrt(2.0))


@pytest.mark.parametrize("N", [1, 2, 3])
def test_taylor_residual_order(stability, start_point, N):
    poly = stability.poly_PN(start_point, N)
    s = np.array([0.08, 0.04, 0.02])
    residual = [stability.taylor_residual(start_point, poly, float(x)) for x in s]

    assert stats.linregress(np.log(s), np.log(residual)).slope >= N + 0.7


def test_poly_order_is_bounded(stability, start_point):
    with pytest.raises(ValueError):
        stability.poly_PN(start_point, 7)


def test_reference_point_without_perturbation_is_the_geodesic_image(stability, start_point):
    g = unit_element(start_point)

    assert stability.reference_point(start_point, 0.0, 4.0).isclose(geodesic_flow(g, 4.0))
    assert stability.approx_inverse_conjugacy(g, start_point, 0.0).isclose(g)


def test_conjugacy_correction_beats_the_plain_flow(stability, start_point):
    check = stability.conjugacy_check(start_point, start_point, 1e-3, 4.0)

    assert check.corrected < check.plain


def test_comparison_is_exact_without_perturbation(stability, potential, start_point):
    observable = build_observable(ObservableKind.V_PULLBACK, potential)
    row = stability.stability_comparison(start_point, 1e-12, 0.05, 3.0, 2, observable)

    assert row.gap <= 1e-8
    assert row.track_time_shift


def test_predicted_shape_keeps_all_terms():
    eps, s, T, N = 1e-2, 0.05, 6.0, 3
    expected = eps * T + eps**1.45 * np.exp(T) + s + s**4 * eps * np.exp(T)

    assert predicted_shape(eps, s, T, N) == pytest.approx(expected, rel=1e-14)


def test_fit_constant_recovers_a_proportional_gap():
    rows = fit_constant([_row(e, 2.0 * sh, sh) for e, sh in ((1e-2, 0.3), (1e-3, 0.1), (1e-4, 0.05))])

    assert all(r.C1 == pytest.approx(2.0) for r in rows)
    assert all(r.bound == pytest.approx(2.0 * r.shape) for r in rows)


def test_gap_slope_on_linear_gaps():
    rows = [_row(e, 5.0 * e, 1.0) for e in (1e-2, 3e-3, 1e-3)]

    assert gap_slope(rows) == pytest.approx(1.0, abs=1e-12)


def test_gap_slope_is_undefined_while_a_gap_vanishes():
    rows = [_row(e, 0.0, 1.0) for e in (1e-2, 3e-3, 1e-3)]

    assert gap_slope(rows) is None
    assert gap_slope(rows[:1]) is None


@pytest.mark.slow
def test_structural_stability_gap_scales_with_eps(stability, potential, lab):
    observable = build_observable(ObservableKind.CUSTOM_BUMP, potential)
    T = 4.0
    # landing on the slope of the observable, where a small push changes its value
    points = [
        rho
        for rho in lab.sample_start_points(40, J=0, eta0=0.05, seed=37)
        if 0.1 < observable(stability.reference_point(rho, 0.0, T)) < 0.9
    ][:2]
    rows = stability.sweep(points, [1e-3, 3e-4, 1e-4], [0.05], [T], [3], observable)

    assert len(points) == 2
    assert len(rows) == 6
    assert len({r.C1 for r in rows}) == 1
    assert all(0.0 < r.lhs < 1.0 and 0.0 < r.rhs < 1.0 for r in rows)
    assert all(r.gap > 0.0 for r in rows)
    assert gap_slope(rows) >= 0.9
