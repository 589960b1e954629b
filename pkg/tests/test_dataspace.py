import numpy as np
import pytest
from scipy.special import eval_chebyu

from hypxray.dataspace import (
    BasisIndex,
    GeodesicGrid,
    GridMismatch,
    Sinogram,
    SinogramInterpolant,
    apply_D_beta_fd,
    apply_T0_fd,
    forward_sinogram,
    inner_product,
    ipq_hat,
    ipq_norm_sq,
    jacobi_p,
    moment_test,
    project_Pi,
    psi,
    psi_sinogram,
    range_report,
    scalar_decay_test,
    spectral_coeffs,
    tt_decay_test,
)
from hypxray.fiber import IttTensor, ScalarField, TTComponent
from hypxray.forward import ipq_closed
from hypxray.geometry import Geodesic

GRID = GeodesicGrid(48, 64)


@pytest.fixture(scope="module")
def noise():
    rng = np.random.default_rng(1)
    shape = (GRID.n_beta, GRID.n_a)
    spectrum = np.fft.fft(rng.standard_normal(shape) + 1j * rng.standard_normal(shape), axis=0)
    spectrum[GRID.n_beta // 2] = 0.0  # the Nyquist mode has no well-defined shift
    return Sinogram(GRID, np.fft.ifft(spectrum, axis=0)).symmetrized()


def test_grid_integrates_geodesic_weight():
    # integral of (1 + a^2)^{-1} over beta and a is 2 pi * pi
    total = np.sum(GRID.weights / (1 + GRID.mesh[1] ** 2))
    assert total == pytest.approx(2 * np.pi**2, rel=1e-12)


def test_jacobi_is_scaled_chebyshev():
    x = np.linspace(-0.99, 0.99, 11)
    for n in range(8):
        np.testing.assert_allclose(jacobi_p(n, x), eval_chebyu(n, x) / np.pi, atol=1e-13)


def test_psi_orthonormal_small():
    vals = [psi_sinogram(n, k, GRID) for n in range(5) for k in range(n + 1)]
    G = np.array([[inner_product(u, v) for v in vals] for u in vals])
    np.testing.assert_allclose(G, np.eye(len(vals)), atol=1e-12)


def test_norm_spot_value():
    assert ipq_norm_sq(0, 2) == pytest.approx(4 * np.pi**2 / 9)
    assert ipq_hat(0, 2, GRID).norm() == pytest.approx(1.0)


def test_basis_index_eigenvalues():
    idx = BasisIndex(4, 1)
    assert idx.d_beta_eigenvalue == 2
    assert idx.t0_eigenvalue == 25
    with pytest.raises(NotImplementedError):
        BasisIndex(1, 0, gamma=1)


def test_sinogram_arithmetic_and_checks():
    a = GRID.sample(lambda b, s: np.cos(b))
    b = GRID.sample(lambda b, s: 1.0 + 0 * b)
    assert (a + b - b).values == pytest.approx(a.values)
    assert (2 * a).norm() == pytest.approx(2 * a.norm())
    with pytest.raises(GridMismatch):
        a + GeodesicGrid(8, 8).sample(lambda b, s: b)
    with pytest.raises(ValueError):
        Sinogram(GRID, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        Sinogram(GRID, np.zeros((GRID.n_beta, GRID.n_a)), parity="odd-ish")


def test_forward_data_are_even(noise):
    f = IttTensor(2, ScalarField.gaussian_bump(0.3, 0.5), (TTComponent(2, [1.0, 0.5j]),))
    assert forward_sinogram(f, GRID).parity_defect() < 1e-10
    assert noise.parity_defect() < 1e-12


def test_interpolant_reproduces_smooth_data():
    h = GRID.sample(lambda b, a: np.cos(2 * b) / (1 + a**2) + np.sin(b) * np.exp(-(a**2)))
    interp = SinogramInterpolant(h)
    B, A = GRID.mesh
    np.testing.assert_allclose(interp(B, A), h.values, atol=1e-13)
    b, a = np.array([0.123, 2.5]), np.array([0.3, -1.7])
    np.testing.assert_allclose(interp(b, a), np.cos(2 * b) / (1 + a**2) + np.sin(b) * np.exp(-(a**2)), atol=1e-8)


def test_projection_recovers_coefficients():
    g = GRID.geodesics
    h = Sinogram(GRID, 2.0 * ipq_closed(0, 4, g) + 1j * np.conj(ipq_closed(3, 4, g)))
    proj = project_Pi(h, 2, cutoff=6)
    assert proj.coeffs[0] == pytest.approx(2.0 * np.sqrt(ipq_norm_sq(0, 4)))
    assert proj.conj_coeffs[3] == pytest.approx(1j * np.sqrt(ipq_norm_sq(3, 4)))
    assert np.max(np.abs(proj.projected.values - h.values)) < 1e-10


def test_spectral_coefficients_of_basis_combination():
    h = psi_sinogram(2, 1, GRID) * 3.0 + psi_sinogram(0, 0, GRID)
    spec = spectral_coeffs(h, 4)
    assert spec.c[2, 1] == pytest.approx(3.0)
    assert spec.c[0, 0] == pytest.approx(1.0)
    assert spec.tail_energy == pytest.approx(0.0, abs=1e-10)


def test_moment_test_detects_rank(noise):
    h = Sinogram(GRID, ipq_closed(1, 4, GRID.geodesics), "even")
    assert moment_test(h, 2).passed
    assert not moment_test(h, 1).passed


def test_decay_tests_reject_noise(noise):
    assert not all(r.passed for r in tt_decay_test(noise, 2))
    assert not scalar_decay_test(noise).passed
    smooth = forward_sinogram(IttTensor(0, ScalarField.gaussian_bump(0.0, 0.5)), GRID)
    assert scalar_decay_test(smooth).passed


def test_range_report_conditions():
    f = IttTensor(2, ScalarField.power_x(2.0), (TTComponent(2, [1.0]),))
    rep = range_report(forward_sinogram(f, GRID), 1)
    assert rep.passed
    assert set(rep.conditions()) == {"moments", "tt_decay", "scalar_decay"}
    assert rep.to_dict()["rank"] == 2


@pytest.mark.parametrize("n,k", [(0, 0), (2, 1), (3, 0), (4, 4)])
def test_finite_difference_eigenvalues(n, k):
    g = Geodesic(np.array([0.4, 2.0]), np.array([0.3, -1.2]))

    def h(beta, a):
        return psi((n, k), Geodesic(beta, a))

    ref = h(g.beta, g.a)
    np.testing.assert_allclose(apply_D_beta_fd(h, g), (n - 2 * k) * ref, atol=1e-8)
    np.testing.assert_allclose(apply_T0_fd(h, g), (n + 1) ** 2 * ref, atol=1e-6)
