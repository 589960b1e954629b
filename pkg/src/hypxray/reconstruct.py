"""Reconstruction of iterated-tt tensors from X-ray data or normal-operator data.

Three procedures are provided:

* coefficient peeling from X-ray data, one tt stage at a time from the top
  degree down, pairing the data with conjugated first-integral monomials;
* spectral filtered backprojection for the scalar part;
* triangular inversion of the normal operator, where the scalar block is
  solved by conjugate gradients in a Klein-disk polynomial basis and each tt
  stage is read off from the fiber modes after removing lower-stage couplings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import betaln, eval_jacobi, gammaln, roots_jacobi

from .dataspace import GeodesicGrid, Sinogram, forward_sinogram, jacobi_all, spectral_coeffs
from .fiber import (
    IttTensor,
    ScalarField,
    SymTensorField,
    TTComponent,
    apply_A,
    ell_m_adjoint,
    fiber_angles,
    fiber_mode,
    project_Q,
)
from .forward import QuadratureSpec, xray_tensor
from .geometry import Geodesic, bdf_x, c_factor, geodesic_space_point, klein_map, trace_w_xi


class TruncationWarning(UserWarning):
    """Coefficients have not decayed by the truncation index."""


class CGNonConvergence(RuntimeError):
    """Conjugate gradients reached the iteration cap before the residual tolerance."""


# ---------------------------------------------------------------------------
# reports


@dataclass
class ReconReport:
    """Recovered tensor with the numerical context of the run."""

    recovered: IttTensor
    residuals: list = field(default_factory=list)
    truncations: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        comps = [{"k": c.k,
                  "plus": [[float(v.real), float(v.imag)] for v in c.plus],
                  "minus": [[float(v.real), float(v.imag)] for v in c.minus]}
                 for c in self.recovered.components]
        return {"rank": self.recovered.rank, "components": comps, "f0": self.recovered.f0.profile,
                "residuals": [float(r) for r in self.residuals], "truncations": self.truncations,
                "tolerances": self.tolerances, **self.extra}


# ---------------------------------------------------------------------------
# peeling from X-ray data


def peeling_constant(k, p):
    """``2^{2k-3} (4k+p-1)! / ((4k-2)! p! pi^2)`` evaluated through log-gamma."""
    return np.exp((2 * k - 3) * np.log(2.0) + gammaln(4 * k + p) - gammaln(p + 1.0)
                  - gammaln(4 * k - 1.0) - 2.0 * np.log(np.pi))


def peeling_kernel(k, p, g: Geodesic):
    """``e^{-i(p+2k) omega} (-a)^p (-i)^{2k} (1+a^2)^{-(p+2k)/2}`` on geodesic space."""
    a = np.asarray(g.a, float)
    return (np.exp(-1j * (p + 2 * k) * g.omega) * (-a) ** p * (-1j) ** (2 * k)
            * (1.0 + a**2) ** (-(p + 2 * k) / 2.0))


def recover_tt_stage(data: Sinogram, k, p_max=12, decay_threshold=1e-6):
    """Recover the degree-``2k`` tt part from data holding no higher stages."""
    if k < 1:
        raise ValueError("stage index k must be at least 1")
    G = data.grid.geodesics
    W = data.grid.weights
    plus = np.zeros(p_max + 1, complex)
    minus = np.zeros(p_max + 1, complex)
    for p in range(p_max + 1):
        ker = peeling_kernel(k, p, G)
        const = peeling_constant(k, p)
        plus[p] = const * np.sum(W * data.values * ker)
        minus[p] = const * np.sum(W * data.values * np.conj(ker))
    for side, coeffs in (("plus", plus), ("minus", minus)):
        scale = max(1.0, float(np.max(np.abs(coeffs))))
        if abs(coeffs[-1]) > decay_threshold * scale:
            warnings.warn(f"stage {k} {side} coefficient at p={p_max} is {abs(coeffs[-1]):.3g}; "
                          "truncation suspect", TruncationWarning, stacklevel=2)
    return TTComponent(2 * k, plus, minus)


def tt_sinogram(comp: TTComponent, grid: GeodesicGrid):
    """Closed-form transform of one tt part on the grid."""
    return forward_sinogram(IttTensor(comp.degree, ScalarField.zero(), (comp,)), grid)


@dataclass
class PeelingResult:
    components: list
    remainder: Sinogram
    residuals: list


def recover_all_tt(data: Sinogram, n, p_max=12, decay_threshold=1e-6):
    """Peel tt stages ``k = n..1`` off the data.

    Returns the recovered components (highest degree first), the remainder
    left after subtracting their closed-form transforms, and the residual
    norm before the first and after each stage.
    """
    remainder = data
    comps, residuals = [], [data.norm()]
    for k in range(n, 0, -1):
        comp = recover_tt_stage(remainder, k, p_max, decay_threshold)
        remainder = remainder - tt_sinogram(comp, data.grid)
        comps.append(comp)
        residuals.append(remainder.norm())
    return PeelingResult(comps, Sinogram(data.grid, remainder.values, data.parity), residuals)


# ---------------------------------------------------------------------------
# spectral filtered backprojection for the scalar part


def evaluate_psi_series(coeffs, n_max, beta, a):
    """``sum c[n, k] psi_{n,k}(beta, a)`` over ``0 <= k <= n <= n_max``."""
    g = Geodesic(beta, a)
    mu = g.mu
    P = jacobi_all(n_max, np.asarray(g.a) * mu)
    E = np.exp(1j * g.omega)
    Einv = np.conj(E)
    out = np.zeros(np.shape(mu), complex)
    for n in range(n_max + 1):
        # sum_k c[n,k] E^{n-2k} evaluated by powers of E and its inverse
        acc = np.zeros_like(out)
        for k in range(n + 1):
            if coeffs[n, k] != 0:
                m = n - 2 * k
                acc = acc + coeffs[n, k] * (E**m if m >= 0 else Einv ** (-m))
        out = out + acc * P[n]
    return mu**2 * out


def recover_f0_spectral(data: Sinogram, n_max, z, n_theta=256, tail_tolerance=0.01):
    """Scalar part from scalar-range data by spectral filtered backprojection.

    Expands the data in the scalar-range basis, multiplies each coefficient by
    ``n + 1`` (the square root of the second-order operator diagonal on that
    basis), backprojects over the fiber at every ``z`` and multiplies by
    ``x(z) / (4 pi)``.
    """
    spec = spectral_coeffs(data, n_max)
    if spec.norm_sq > 0 and spec.tail_energy > tail_tolerance * spec.norm_sq:
        warnings.warn(f"spectral tail holds {spec.tail_energy / spec.norm_sq:.2%} of the energy "
                      f"beyond n_max={n_max}", TruncationWarning, stacklevel=2)
    filtered = spec.c * (np.arange(n_max + 1) + 1.0)[:, None]
    z = np.asarray(z, complex)
    theta = fiber_angles(n_theta)
    flat = z.ravel()
    out = np.empty(flat.size, complex)
    step = max(1, 65536 // n_theta)
    for start in range(0, flat.size, step):
        zc = flat[start:start + step]
        beta, a, _ = geodesic_space_point(zc[:, None], theta[None, :])
        vals = evaluate_psi_series(filtered, n_max, beta, a)
        out[start:start + step] = vals.mean(axis=1) * 2.0 * np.pi
    return (bdf_x(flat) * out / (4.0 * np.pi)).reshape(z.shape)


# ---------------------------------------------------------------------------
# base grids and the normal operator


@dataclass(frozen=True)
class BaseGrid:
    """Polar grid on ``|z| <= r_max``: Gauss-Legendre radii, uniform polar angles."""

    n_r: int = 24
    n_phi: int = 48
    r_max: float = 0.9

    def __post_init__(self):
        if not 0 < self.r_max < 1:
            raise ValueError("r_max must lie in (0, 1)")

    @cached_property
    def _nodes(self):
        s, ws = np.polynomial.legendre.leggauss(self.n_r)
        r = 0.5 * self.r_max * (s + 1.0)
        wr = 0.5 * self.r_max * ws
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        z = (r[:, None] * np.exp(1j * phi[None, :])).ravel()
        area = np.repeat(wr * r * 2.0 * np.pi / self.n_phi, self.n_phi)
        return z, area

    @property
    def z(self):
        return self._nodes[0]

    @property
    def area_weights(self):
        return self._nodes[1]

    @property
    def volume_weights(self):
        """Hyperbolic area weights ``c^{-2} dA``."""
        return self.area_weights / c_factor(self.z) ** 2


def backproject(h, m, base: BaseGrid, n_theta=256):
    """Rank-``m`` backprojection of a function ``h(beta, a)`` on geodesic space.

    Pulls ``h`` back to every fiber over the base grid, extracts the fiber
    modes ``-m..m`` and applies the adjoint of the phase-image map.
    """
    theta = fiber_angles(n_theta)
    beta, a, _ = geodesic_space_point(base.z[:, None], theta[None, :])
    values = np.asarray(h(beta, a), complex)
    modes = {t: fiber_mode(values, t) for t in range(-m, m + 1, 2)}
    return ell_m_adjoint(modes, m)


def apply_normal(f: IttTensor, base: BaseGrid, n_theta=256, quad: QuadratureSpec = QuadratureSpec(),
                 workers=1, use_exact_scalar=True):
    """Normal operator ``N_m f`` sampled on the base grid (``m = f.rank``)."""
    return backproject(lambda beta, a: xray_tensor(f, Geodesic(beta, a), quad, workers, use_exact_scalar),
                       f.rank, base, n_theta)


# ---------------------------------------------------------------------------
# Klein-disk polynomial basis for the scalar block


class KleinBasis:
    """Scalar fields ``x(z)^2 Z(K)`` with ``K`` the Klein coordinate of ``z``.

    ``Z`` runs over disk polynomials ``|K|^{|l|} e^{i l phi} P_j^{(1/2, |l|)}(2|K|^2 - 1)``
    of total degree ``2j + |l| <= degree``, normalized in ``L^2`` of the
    hyperbolic area. Since ``1 - |K|^2 = x^2`` and geodesics are chords of the
    Klein disk, each transform is an exact polynomial integral over a chord:
    ``I(x^2 Z)(g) = mu^2 int_{-1}^{1} Z(w + 2 v xi) dv``.
    """

    def __init__(self, degree=16):
        self.degree = degree
        self.index = [(j, l) for n in range(degree + 1) for l in range(-n, n + 1, 2) for j in [(n - abs(l)) // 2]]
        self.norms = np.array([self._norm(j, abs(l)) for j, l in self.index])
        x, w = np.polynomial.legendre.leggauss(degree // 2 + 2)
        self._gl = (x, w)

    @staticmethod
    def _norm(j, l):
        # int x^4 |Z|^2 dV_H = pi 2^{-3/2-l} int (1-t)^{1/2} (1+t)^l P_j(t)^2 dt
        t, wt = roots_jacobi(j + 2, 0.5, l)
        h = float(np.sum(wt * eval_jacobi(j, 0.5, l, t) ** 2))
        return 1.0 / np.sqrt(np.pi * 2.0 ** (-1.5 - l) * h)

    def __len__(self):
        return len(self.index)

    def disk_polynomials(self, K, coeffs=None):
        """Values of every ``Z`` at Klein points ``K`` (last axis = basis index), or their combination."""
        K = np.asarray(K, complex)
        u = np.abs(K) ** 2
        t = 2.0 * u - 1.0
        if coeffs is None:
            out = np.empty(K.shape + (len(self),), complex)
        else:
            out = np.zeros(K.shape, complex)
        powers = {}
        for i, (j, l) in enumerate(self.index):
            if coeffs is not None and coeffs[i] == 0:
                continue
            if l not in powers:
                powers[l] = K**l if l >= 0 else np.conj(K) ** (-l)
            val = self.norms[i] * powers[l] * eval_jacobi(j, 0.5, abs(l), t)
            if coeffs is None:
                out[..., i] = val
            else:
                out = out + coeffs[i] * val
        return out

    def values(self, z, coeffs=None):
        """Basis fields (or a combination) at Poincare points ``z``."""
        z = np.asarray(z, complex)
        x = bdf_x(z)
        vals = self.disk_polynomials(klein_map(z), coeffs)
        return (x**2)[..., None] * vals if coeffs is None else x**2 * vals

    def xray(self, g: Geodesic, coeffs=None, chunk=4096):
        """Exact transforms of the basis (or a combination) along geodesics ``g``."""
        w, xi = trace_w_xi(g)
        w, xi = np.broadcast_arrays(np.asarray(w), np.asarray(xi))
        shape = w.shape
        w, xi = w.ravel(), xi.ravel()
        mu2 = 4.0 * np.abs(xi) ** 2
        v, wv = self._gl
        tail = (len(self),) if coeffs is None else ()
        out = np.empty((w.size,) + tail, complex)
        for s in range(0, w.size, chunk):
            sl = slice(s, s + chunk)
            K = w[sl, None] + 2.0 * v[None, :] * xi[sl, None]
            vals = self.disk_polynomials(K, coeffs)
            integ = np.tensordot(vals, wv, axes=([1], [0])) if coeffs is not None else np.einsum("gvb,v->gb", vals, wv)
            out[sl] = (mu2[sl] if coeffs is not None else mu2[sl, None]) * integ
        return out.reshape(shape + tail)

    def field(self, coeffs):
        """Scalar field ``sum c_j x^2 Z_j`` with its exact transform attached."""
        coeffs = np.asarray(coeffs, complex)

        def ev(z, x):
            return x**2 * self.disk_polynomials(klein_map(z), coeffs)

        def exact(beta, a):
            return self.xray(Geodesic(beta, a), coeffs)

        return ScalarField(ev, decay_delta=2.0, xray_exact=exact,
                           profile={"profile": "klein_expansion", "degree": self.degree,
                                    "coeffs": [[float(c.real), float(c.imag)] for c in coeffs]})


def klein_normal_matrix(basis: KleinBasis, z, n_theta=256):
    """``N_0`` applied to every basis field, sampled at the points ``z``.

    ``N_0`` commutes with rotations and the basis field of angular order
    ``l`` picks up ``e^{i l phi}`` under rotation by ``phi``; so the fiber
    integrals are computed only at the distinct radii and rotated into place.
    """
    z = np.asarray(z, complex).ravel()
    radii, where = np.unique(np.round(np.abs(z), 14), return_inverse=True)
    theta = fiber_angles(n_theta)
    beta, a, _ = geodesic_space_point(radii[:, None] + 0j, theta[None, :])
    radial = basis.xray(Geodesic(beta, a)).mean(axis=1) * (2.0 * np.pi)
    orders = np.array([l for _, l in basis.index])
    return np.exp(1j * np.angle(z)[:, None] * orders[None, :]) * radial[where]


def solve_scalar_block(rhs, base: BaseGrid, basis: KleinBasis, n_theta=256, tol=1e-8, maxiter=200):
    """Solve ``N_0 f = rhs`` on the base grid for ``f`` in the span of the Klein basis.

    Least squares in hyperbolic area over the base grid: the Hermitian
    positive semidefinite operator ``M^H W M`` (``M`` the sampled ``N_0`` of
    the basis) is applied matrix-free and inverted by conjugate gradients.
    Data outside the base disk are never needed. Returns
    ``(coeffs, iterations, relative residual)``.
    """
    M = klein_normal_matrix(basis, base.z, n_theta)
    w = base.volume_weights
    b = M.conj().T @ (w * rhs)
    if not np.any(b):
        return np.zeros(len(basis), complex), 0, 0.0
    op = LinearOperator((len(basis), len(basis)), matvec=lambda c: M.conj().T @ (w * (M @ c)), dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    coeffs, info = cg(op, b, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    resid = float(np.linalg.norm(op @ coeffs - b) / np.linalg.norm(b))
    if info != 0:
        raise CGNonConvergence(f"CG stopped after {count[0]} iterations with relative residual {resid:.3g}")
    return coeffs, count[0], resid


def fit_tt_side(values, base: BaseGrid, degree, p_max, side="plus"):
    """Least-squares coefficients of ``c^{degree} sum b_p z^p`` (or ``zbar^p``) in hyperbolic area."""
    z = base.z if side == "plus" else np.conj(base.z)
    design = c_factor(base.z)[:, None] ** degree * z[:, None] ** np.arange(p_max + 1)[None, :]
    sw = np.sqrt(base.volume_weights)
    scale = np.linalg.norm(design * sw[:, None], axis=0)
    coef, *_ = np.linalg.lstsq(design * sw[:, None] / scale, values * sw, rcond=None)
    fitted = design @ (coef / scale)
    resid = float(np.sqrt(np.sum(base.volume_weights * np.abs(values - fitted) ** 2)))
    return coef / scale, resid


def invert_normal(D: SymTensorField, base: BaseGrid, p_max=8, scalar_degree=16, n_theta=256,
                  cg_tol=1e-8, cg_maxiter=200):
    """Recover an iterated-tt tensor from its normal-operator data ``D`` on ``base``.

    The scalar block comes first: the mode-0 component of the frame
    automorphism applied to ``D`` equals ``N_0 f0``, solved by conjugate
    gradients. Then for each degree ``k' = 2, 4, ..., m`` the modes ``+-k'`` of
    ``A D`` are divided by ``4 pi B(1/2, k')`` after subtracting the couplings of
    already recovered lower stages, each computed with :func:`apply_normal`.
    """
    m = D.rank
    AD = apply_A(D)
    basis = KleinBasis(scalar_degree)
    coeffs, iters, cg_resid = solve_scalar_block(AD.mode(0), base, basis, n_theta, cg_tol, cg_maxiter)
    f0 = basis.field(coeffs) if np.any(coeffs) else ScalarField.zero()
    recovered = []
    fit_residuals = {}
    for kp in range(2, m + 1, 2):
        denom = 4.0 * np.pi * np.exp(betaln(0.5, kp))
        F = (project_Q(AD, kp) + project_Q(AD, -kp)) * (1.0 / denom)
        if np.any(coeffs):
            AN = apply_A(apply_normal(IttTensor(m, f0), base, n_theta))
            F = F - (project_Q(AN, kp) + project_Q(AN, -kp)) * (1.0 / denom)
        for comp in recovered:
            plus_only = TTComponent(comp.degree, comp.plus, np.zeros(1))
            minus_only = TTComponent(comp.degree, np.zeros(1), comp.minus)
            ANp = apply_A(apply_normal(IttTensor(m, components=(plus_only,)), base, n_theta))
            ANm = apply_A(apply_normal(IttTensor(m, components=(minus_only,)), base, n_theta))
            F = F - (project_Q(ANp, kp) + project_Q(ANm, -kp)) * (1.0 / denom)
        plus, rp = fit_tt_side(F.mode(kp), base, kp, p_max, "plus")
        minus, rm = fit_tt_side(F.mode(-kp), base, kp, p_max, "minus")
        recovered.append(TTComponent(kp, plus, minus))
        fit_residuals[kp] = (rp, rm)
    report = {"cg_iterations": iters, "cg_relative_residual": cg_resid,
              "fit_residuals": {str(k): list(v) for k, v in fit_residuals.items()}}
    return IttTensor(m, f0, tuple(recovered)), report


def relative_l2(values, reference, weights):
    """Relative weighted ``L^2`` distance."""
    num = np.sum(weights * np.abs(values - reference) ** 2)
    den = np.sum(weights * np.abs(reference) ** 2)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))
