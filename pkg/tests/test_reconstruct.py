import json
import warnings

import numpy as np
import pytest
from scipy.special import beta as beta_fn

from hypxray.dataspace import GeodesicGrid, Sinogram, forward_sinogram, moment_test
from hypxray.fiber import IttTensor, ScalarField, SymTensorField, TTComponent, apply_A
from hypxray.forward import ipq_closed, xray_scalar
from hypxray.geometry import Geodesic, c_factor
from hypxray.reconstruct import (
    BaseGrid,
    CGNonConvergence,
    KleinBasis,
    ReconReport,
    TruncationWarning,
    apply_normal,
    invert_normal,
    klein_normal_matrix,
    recover_all_tt,
    recover_f0_spectral,
    recover_tt_stage,
    relative_l2,
    solve_scalar_block,
)

GRID = GeodesicGrid(48, 64)
BASE = BaseGrid(12, 24, 0.8)


def test_peeling_two_coefficients():
    g = GRID.geodesics
    data = Sinogram(GRID, ipq_closed(0, 2, g) + 2.0 * ipq_closed(1, 2, g), "even")
    comp = recover_tt_stage(data, 1, p_max=4)
    np.testing.assert_allclose(comp.plus, [1, 2, 0, 0, 0], atol=1e-10)
    np.testing.assert_allclose(comp.minus, 0, atol=1e-10)


def test_peeling_minus_side():
    data = Sinogram(GRID, 1j * np.conj(ipq_closed(2, 4, GRID.geodesics)), "even")
    comp = recover_tt_stage(data, 2, p_max=3)
    np.testing.assert_allclose(comp.minus, [0, 0, 1j, 0], atol=1e-10)


def test_peeling_warns_when_truncated():
    data = Sinogram(GRID, ipq_closed(3, 2, GRID.geodesics), "even")
    with pytest.warns(TruncationWarning):
        recover_tt_stage(data, 1, p_max=3)


def test_peeling_round_trip_and_remainder():
    f = IttTensor(4, ScalarField.power_x(2.0), (TTComponent.real(2, [1.0, -1.0]), TTComponent(4, [0.0, 1.0], [0.5j])))
    data = forward_sinogram(f, GRID)
    res = recover_all_tt(data, 2, p_max=6)
    for comp in res.components:
        want = f.component(comp.k)
        np.testing.assert_allclose(comp.plus[: want.plus.size], want.plus, atol=1e-9)
        np.testing.assert_allclose(comp.minus[: want.minus.size], want.minus, atol=1e-9)
    assert all(b <= a + 1e-12 for a, b in zip(res.residuals, res.residuals[1:]))
    assert moment_test(res.remainder, 0).passed
    np.testing.assert_allclose(res.remainder.values, 2.0 / (1 + GRID.mesh[1] ** 2), atol=1e-9)


def test_zero_data_gives_zero():
    zero = Sinogram(GRID, np.zeros((GRID.n_beta, GRID.n_a)), "even")
    res = recover_all_tt(zero, 2, p_max=4)
    assert all(not np.any(c.plus) and not np.any(c.minus) for c in res.components)
    assert not np.any(recover_f0_spectral(zero, 8, BASE.z, 32))
    D = SymTensorField(2, np.zeros((3, BASE.z.size)))
    rec, info = invert_normal(D, BASE, n_theta=64)
    assert not np.any(rec.f0(BASE.z))
    assert all(not np.any(c.plus) for c in rec.components)
    assert info["cg_iterations"] == 0


def test_spectral_scalar_recovery_exact_weight():
    data = forward_sinogram(IttTensor(0, ScalarField.power_x(2.0)), GRID)
    rec = recover_f0_spectral(data, 8, BASE.z, 128)
    np.testing.assert_allclose(rec, ScalarField.power_x(2.0)(BASE.z), atol=1e-10)


def test_spectral_truncation_warning():
    data = forward_sinogram(IttTensor(0, ScalarField.compact_bump(0.0, 0.5)), GRID)
    with pytest.warns(TruncationWarning):
        recover_f0_spectral(data, 1, np.array([0.0]), 32)


def test_klein_basis_transform_is_exact():
    basis = KleinBasis(6)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    field = basis.field(coeffs)
    g = Geodesic(np.array([0.0, 1.3, 4.0]), np.array([0.2, -1.5, 3.0]))
    numeric = xray_scalar(field, g)
    np.testing.assert_allclose(field.xray_exact(g.beta, g.a), numeric, rtol=1e-9, atol=1e-12)


def test_klein_basis_lowest_element():
    basis = KleinBasis(0)
    # the constant disk polynomial is x^2 up to the normalization
    z = np.array([0.0, 0.5])
    np.testing.assert_allclose(basis.values(z)[:, 0] / basis.norms[0], ScalarField.power_x(2)(z))


def test_rotation_trick_matches_direct_normal_operator():
    # polar angles dividing the fiber grid make the rotated fiber samples coincide
    base = BaseGrid(8, 16, 0.8)
    basis = KleinBasis(4)
    M = klein_normal_matrix(basis, base.z, 64)
    j = 5
    coeffs = np.eye(len(basis))[j]
    direct = apply_normal(IttTensor(0, basis.field(coeffs)), base, 64)
    np.testing.assert_allclose(M[:, j], direct.mode(0), atol=1e-12)


def test_normal_operator_is_positive_on_scalar_weight():
    # N_0 x^2 = 4 pi x
    D = apply_normal(IttTensor(0, ScalarField.power_x(2.0)), BASE, 128)
    x = ScalarField.power_x(1.0)(BASE.z)
    np.testing.assert_allclose(D.mode(0), 4 * np.pi * x, atol=1e-10)


def test_triangularity_rank_two():
    gen = IttTensor(2, components=(TTComponent(2, [1.0]),))
    T = apply_A(apply_normal(gen, BASE, 128))
    np.testing.assert_allclose(T.mode(2) / (2 * np.pi), 2 * beta_fn(0.5, 2) * c_factor(BASE.z) ** 2, atol=1e-8)
    np.testing.assert_allclose(T.mode(0), 0, atol=1e-8)
    assert 2 * beta_fn(0.5, 2) == pytest.approx(8 / 3)


def test_invert_normal_pure_tt():
    f = IttTensor(2, components=(TTComponent.real(2, [1.0, 0.25]),))
    rec, _ = invert_normal(apply_normal(f, BASE, 128), BASE, p_max=4, scalar_degree=8, n_theta=128)
    np.testing.assert_allclose(rec.component(1).plus[:2], [1.0, 0.25], atol=1e-6)
    assert np.max(np.abs(rec.f0(BASE.z))) < 1e-8


def test_invert_normal_scalar_with_exact_weight():
    f = IttTensor(0, ScalarField.power_x(2.0))
    rec, info = invert_normal(apply_normal(f, BASE, 128), BASE, scalar_degree=4, n_theta=128)
    assert relative_l2(rec.f0(BASE.z), f.f0(BASE.z), BASE.volume_weights) < 1e-6
    assert info["cg_relative_residual"] <= 1e-8


def test_cg_iteration_cap():
    basis = KleinBasis(8)
    rhs = apply_normal(IttTensor(0, ScalarField.gaussian_bump(0.2, 0.5)), BASE, 64).mode(0)
    with pytest.raises(CGNonConvergence):
        solve_scalar_block(rhs, BASE, basis, 64, tol=1e-12, maxiter=1)


def test_base_grid_area():
    base = BaseGrid(16, 8, 0.5)
    assert np.sum(base.area_weights) == pytest.approx(np.pi * 0.25)
    with pytest.raises(ValueError):
        BaseGrid(4, 4, 1.0)


def test_report_is_json_serializable():
    f = IttTensor(2, ScalarField.power_x(2.0), (TTComponent(2, [1.0]),))
    text = json.dumps(ReconReport(f, [1.0, 0.5], {"p_max": 4}).to_dict())
    assert json.loads(text)["components"][0]["k"] == 1


def test_warnings_do_not_leak_from_clean_runs():
    data = forward_sinogram(IttTensor(2, components=(TTComponent(2, [1.0]),)), GRID)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        recover_all_tt(data, 1, p_max=4)
