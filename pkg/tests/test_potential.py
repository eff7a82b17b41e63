import numpy as np
import pytest

from src.domain.errors import OffShellPoint
from src.domain.hyperbolic import ChartPhasePoint, canonicalize, to_chart
from src.domain.observable import ObservableKind, build_observable
from src.domain.potential import Bump, PotentialField


def test_bump_validation():
    with pytest.raises(ValueError):
        Bump(0.0, -1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        Bump(0.0, 1.0, 0.0, 1.0)


def test_constant_potential_vanishes(flat_potential, samples):
    m = np.stack([g.m for g in samples])

    assert flat_potential.is_constant
    assert np.all(flat_potential.V_matrices(m) == 0.0)
    assert np.all(flat_potential.f_V_matrices(m) == 0.0)


def test_potential_is_gamma_invariant(group, potential, samples):
    m = np.stack([g.m for g in samples])
    value, f = potential.fields_on_matrices(m)

    assert np.max(np.abs(value)) > 0.0
    for sigma in group.side_pairings:
        moved_value, moved_f = potential.fields_on_matrices(canonicalize(sigma @ m))
        assert np.max(np.abs(moved_value - value)) <= 1e-10
        assert np.max(np.abs(moved_f - f)) <= 1e-10


def test_far_points_use_the_reduced_evaluation(group, potential):
    z = 0.2 + 1.3j
    word = group.word_element((0, 1, 2))
    far = word.apply(z)

    assert potential.eval_V(far) == pytest.approx(potential.eval_V(z), abs=1e-10)


def test_gradient_matches_central_difference(potential):
    h = 1e-6
    for z in (0.3 + 1.2j, -0.4 + 0.9j, 0.1 + 1.6j):
        gu, gv = potential.grad_V(z)
        du = (potential.eval_V(z + h) - potential.eval_V(z - h)) / (2.0 * h)
        dv = (potential.eval_V(z + 1j * h) - potential.eval_V(z - 1j * h)) / (2.0 * h)
        assert gu == pytest.approx(du, abs=1e-6)
        assert gv == pytest.approx(dv, abs=1e-6)


def test_f_V_agrees_between_chart_and_matrix_forms(potential, samples):
    for g in samples[:5]:
        assert potential.f_V(to_chart(g)) == pytest.approx(float(potential.f_V_matrices(g.m)[0]), abs=1e-12)


def test_f_V_pairs_the_gradient_with_the_turned_direction(potential):
    # upward unit covector at z: the turned direction points in -u
    z = 0.25 + 1.1j
    gu, _ = potential.grad_V(z)
    rho = ChartPhasePoint(z.real, z.imag, 0.0, 1.0 / z.imag)

    assert potential.f_V(rho) == pytest.approx(-z.imag * gu, abs=1e-14)


def test_f_V_rejects_off_shell_points(potential):
    with pytest.raises(OffShellPoint):
        potential.f_V(ChartPhasePoint(0.0, 1.0, 0.0, 3.0))


def test_with_bumps_extends_the_field(potential):
    extra = potential.with_bumps([Bump(0.0, 1.0, 0.3, 0.5)])

    assert len(extra.bumps) == len(potential.bumps) + 1
    assert extra.eval_V(1j) == pytest.approx(potential.eval_V(1j) + 0.5, abs=1e-12)


def test_sup_bound_dominates_samples(potential, group):
    m = group.sample_liouville_array(2_000, seed=4).matrices

    assert np.max(np.abs(potential.V_matrices(m))) <= potential.sup_bound


def test_observables(potential, samples):
    m = np.stack([g.m for g in samples])
    constant = build_observable(ObservableKind.CONSTANT, potential)
    pullback = build_observable("V_pullback", potential)
    product = build_observable(ObservableKind.PRODUCT, potential)

    assert np.all(constant.on_matrices(m) == 1.0)
    assert np.allclose(pullback.on_matrices(m), potential.V_matrices(m))
    assert np.allclose(product.on_matrices(m), potential.V_matrices(m) * potential.f_V_matrices(m))
    assert build_observable(ObservableKind.CUSTOM_BUMP, potential).auxiliary is not None
    assert pullback.on_chart(to_chart(samples[0])) == pytest.approx(pullback(samples[0]))
