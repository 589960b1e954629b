import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb

from hypxray.fiber import (
    AliasingWarning,
    IttTensor,
    ScalarField,
    SymTensorField,
    TTComponent,
    apply_A,
    apply_L,
    ell_m,
    ell_m_adjoint,
    fiber_angles,
    fiber_mode,
    frame_norm,
    itt_component_form,
    phase_image,
    project_Q,
)
from hypxray.geometry import bdf_x


def test_fiber_mode_exact_on_trig_polynomial():
    th = fiber_angles(32)
    samples = 2.0 + 3j * np.exp(2j * th) - np.exp(-5j * th)
    assert fiber_mode(samples, 0) == pytest.approx(2.0)
    assert fiber_mode(samples, 2) == pytest.approx(3j)
    assert fiber_mode(samples, -5) == pytest.approx(-1.0)
    assert abs(fiber_mode(samples, 1)) < 1e-15


def test_fiber_mode_warns_on_aliasing():
    with pytest.warns(AliasingWarning):
        fiber_mode(np.ones(8), 4)


@pytest.mark.parametrize("m", [0, 2, 4])
def test_adjoint_pairing(m):
    rng = np.random.default_rng(m)
    T = SymTensorField(m, rng.standard_normal(m + 1) + 1j * rng.standard_normal(m + 1))
    modes = {t: complex(rng.standard_normal(), rng.standard_normal()) for t in range(-m, m + 1, 2)}
    S = ell_m_adjoint(modes, m)
    lhs = sum(frame_norm(m, k) * T.components[k] * np.conj(S.components[k]) for k in range(m + 1))
    rhs = 2 * np.pi * sum(T.components[k] * np.conj(modes[2 * k - m]) for k in range(m + 1))
    assert lhs == pytest.approx(rhs)


@pytest.mark.parametrize("m", [2, 4])
def test_frame_automorphism_inverts_adjoint(m):
    modes = {t: 1.0 + 0.5 * t for t in range(-m, m + 1, 2)}
    T = apply_A(ell_m_adjoint(modes, m))
    for t, h in modes.items():
        assert T.mode(t) / (2 * np.pi) == pytest.approx(h)


def test_metric_multiplication_keeps_phase_image():
    T = SymTensorField(2, np.array([1.0, 2j, -1.0]))
    th = fiber_angles(16)
    np.testing.assert_allclose(phase_image(apply_L(T, 2), th), phase_image(T, th), atol=1e-14)


def test_projection_keeps_one_mode():
    T = SymTensorField(2, np.array([1.0, 2.0, 3.0]))
    P = project_Q(T, 2)
    np.testing.assert_array_equal(P.components, [0, 0, 3.0])
    with pytest.raises(ValueError):
        project_Q(T, 1)


def test_component_form_matches_evaluation():
    f = IttTensor(4, ScalarField.gaussian_bump(0.2, 0.6),
                  (TTComponent(2, [1.0, 2j], [0.5]), TTComponent(4, [0.0, 1.0], [1j, 0.3])))
    z = np.array([0.1 + 0.2j, -0.4, 0.6j])
    th = fiber_angles(12)
    np.testing.assert_allclose(phase_image(itt_component_form(f, z), th), ell_m(f, z[:, None], th[None, :]),
                               atol=1e-13)


def test_tt_value_is_polynomial():
    comp = TTComponent(2, [1.0, -1.0], [2.0])
    assert comp.plus_value(0.5) == pytest.approx(0.5)
    assert comp.minus_value(0.5j) == pytest.approx(2.0)
    real = TTComponent.real(2, [1j, 2.0])
    np.testing.assert_allclose(real.minus, [-1j, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1, max_size=6),
       st.integers(1, 3))
def test_summability_finite_for_polynomials(coeffs, k):
    assert np.isfinite(TTComponent(2 * k, coeffs).summability(0.25))


def test_summability_infinite_below_threshold():
    assert TTComponent(2, [1.0]).summability(0.5) == np.inf


def test_tensor_validation():
    with pytest.raises(ValueError):
        IttTensor(3)
    with pytest.raises(ValueError):
        IttTensor(2, components=(TTComponent(4, [1.0]),))
    with pytest.raises(ValueError):
        IttTensor(4, components=(TTComponent(2, [1.0]), TTComponent(2, [2.0])))
    with pytest.raises(ValueError):
        TTComponent(3, [1.0])
    with pytest.raises(ValueError):
        TTComponent(2, [np.inf])


def test_missing_component_is_zero():
    f = IttTensor(4, components=(TTComponent(4, [1.0]),))
    assert not np.any(f.component(1).plus)
    assert f.n == 2


def test_scalar_profiles():
    z = np.array([0.0, 0.3, 0.7j])
    np.testing.assert_allclose(ScalarField.power_x(2.0)(z), bdf_x(z) ** 2)
    bump = ScalarField.gaussian_bump(0.3 + 0.1j, 0.5, amplitude=2.0)
    assert bump(0.3 + 0.1j) == pytest.approx(2.0)
    compact = ScalarField.compact_bump(0.0, 0.5)
    assert compact(0.0) == pytest.approx(1.0)
    assert compact(0.6) == 0.0
    with pytest.raises(ValueError):
        ScalarField.compact_bump(0.6, 0.5)
    with pytest.raises(ValueError):
        ScalarField.power_x(0.0)


def test_gaussian_bump_is_invariant_under_isometry():
    # the rotation about its center preserves hyperbolic distance
    bump = ScalarField.gaussian_bump(0.0, 0.4)
    assert bump(0.5) == pytest.approx(bump(0.5j))


def test_sum_keeps_exact_transform():
    f = ScalarField.power_x(1.0) + ScalarField.power_x(2.0)
    assert f.xray_exact(0.0, 0.0) == pytest.approx(np.pi + 2.0)
    assert f.decay_delta == 1.0


def test_check_decay():
    assert ScalarField.power_x(2.0).check_decay(constant=1.0)


def test_frame_norm_values():
    assert frame_norm(2, 1) == pytest.approx(2.0)
    assert frame_norm(4, 0) == pytest.approx(16.0 / comb(4, 0))
